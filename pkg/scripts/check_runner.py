"""
Minimal runner shared by the validation scripts.

Each check is a function whose docstring's first line is its title. It raises
AssertionError on failure and may return a short detail string for the PASS line.
"""

from pathlib import Path
import logging
import sys
import time

# Make `src` importable when a script is run as `python scripts/<name>.py`
ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))


def run_checks(title, checks) -> int:
    """Run checks in order; returns a process exit code."""
    logging.basicConfig(level=logging.WARNING, format='%(levelname)s: %(message)s')

    print("=" * 80)
    print(title)
    print("=" * 80 + "\n")

    failures = []
    for number, check in enumerate(checks, 1):
        heading = (check.__doc__ or check.__name__).strip().splitlines()[0]
        print(f"Test {number}: {heading}")
        print("-" * 80)
        start = time.perf_counter()
        try:
            detail = check()
        except AssertionError as exc:
            failures.append(heading)
            print(f"✗ FAIL: {exc}\n")
            continue
        except Exception as exc:
            failures.append(heading)
            print(f"✗ FAIL: {type(exc).__name__}: {exc}\n")
            continue
        elapsed = time.perf_counter() - start
        suffix = f": {detail}" if detail else ""
        print(f"✓ PASS{suffix} ({elapsed:.1f}s)\n")

    print("=" * 80)
    print(f"{len(checks) - len(failures)}/{len(checks)} checks passed")
    for heading in failures:
        print(f"  ✗ {heading}")
    print("=" * 80)
    return 1 if failures else 0
