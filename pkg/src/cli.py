"""
Command-line interface.

    syncgrid run [CONFIG] [--preset NAME] [--out DIR]
    syncgrid verify [CONFIG] [--preset NAME] [--out DIR]
    syncgrid render CHECKPOINT [CONFIG] --seed N [--preset NAME] [--out DIR]
    syncgrid sweep [CONFIG] --seeds 0,1,2 [--preset NAME] [--out DIR]
    syncgrid plot OUT_DIR

Exit codes: 0 success, 2 invalid config/checkpoint or oversized task, 3 I/O
failure, 1 anything else the package raises.
"""

from pathlib import Path
from typing import List, Optional
import argparse
import json
import logging

from .config import create_default_config, create_preset_config
from .config_loader import load_config_from_yaml, print_config_summary
from .errors import CheckpointError, ConfigError, ContractError, SizeError, SyncGridError
from .experiment import render, run_experiment, sweep, verify
from .visualization import plot_curves, print_summary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _load(args):
    if args.config:
        return load_config_from_yaml(args.config, preset=args.preset)
    if args.preset:
        return create_preset_config(args.preset)
    return create_default_config()


def parse_seeds(text: str) -> List[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"--seeds expects comma-separated integers, got {text!r}") from exc
    if not seeds:
        raise ConfigError("--seeds is empty")
    return seeds


def cmd_run(args) -> int:
    config = _load(args)
    print_config_summary(config)
    result = run_experiment(config, args.out)
    print_summary(result.summary)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load(args)
    print_config_summary(config)
    result = sweep(config, parse_seeds(args.seeds), args.out)
    print_summary(result.summary)
    return EXIT_OK


def cmd_verify(args) -> int:
    config = _load(args)
    document = verify(config)
    text = json.dumps(document, indent=2)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verdict.json").write_text(text + "\n")
    return EXIT_OK


def cmd_render(args) -> int:
    config = _load(args)
    out = Path(args.out) if args.out else Path(args.checkpoint)
    out.mkdir(parents=True, exist_ok=True)
    render(args.checkpoint, config, args.seed, trace_path=out / f"trace_seed{args.seed}.jsonl")
    return EXIT_OK


def cmd_plot(args) -> int:
    path = plot_curves(args.out_dir)
    print(f"Saved {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="syncgrid",
        description="Synchronized Predator-Prey benchmark: training, MST verification and playback",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    def config_args(p):
        p.add_argument("config", nargs="?", default=None, help="YAML config file")
        p.add_argument("--preset", default=None, help="Start from a named preset")
        p.add_argument("--out", default=None, help="Output directory")

    p = sub.add_parser("run", help="Train every configured seed")
    config_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="Train an explicit list of seeds")
    config_args(p)
    p.add_argument("--seeds", required=True, help="Comma-separated seeds, e.g. 0,1,2")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="Check the MST definition on a tiny task")
    config_args(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("render", help="Play back a checkpoint greedily")
    p.add_argument("checkpoint", help="Checkpoint directory")
    config_args(p)
    p.add_argument("--seed", type=int, default=0, help="Environment seed")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("plot", help="Draw learning curves from aggregate.csv")
    p.add_argument("out_dir", help="Run output directory")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s: %(message)s')

    try:
        return args.func(args)
    except (ConfigError, SizeError, CheckpointError, ContractError) as exc:
        logger.error(str(exc))
        return EXIT_CONFIG
    except OSError as exc:
        logger.error(f"I/O error: {exc}")
        return EXIT_IO
    except SyncGridError as exc:
        logger.error(str(exc))
        return EXIT_FAILURE
