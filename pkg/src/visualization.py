"""
Reporting for training runs: metrics CSVs, cross-seed aggregation, text summary
and learning-curve charts.
"""

from pathlib import Path
from typing import Dict, Iterable, List, Sequence
import csv
import logging

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .dcg import EpisodeMetrics

logger = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "seed",
    "episode",
    "env_step",
    "train_return",
    "length",
    "eval_return_mean",
    "epsilon",
    "loss_mean",
    "captures",
    "miscaptures",
]

# Per-seed columns averaged in the aggregate file
AGGREGATED = ["train_return", "eval_return_mean", "loss_mean", "captures", "miscaptures"]


def format_value(value) -> str:
    """Integers verbatim, floats at 6 significant digits."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".6g")


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def metrics_rows(seed: int, metrics: Sequence[EpisodeMetrics]) -> List[list]:
    return [
        [
            seed,
            m.episode,
            m.env_step,
            m.train_return,
            m.length,
            m.eval_return_mean,
            m.epsilon,
            m.loss_mean,
            m.captures,
            m.miscaptures,
        ]
        for m in metrics
    ]


def write_metrics_csv(path, seed: int, metrics: Sequence[EpisodeMetrics]) -> Path:
    path = Path(path)
    _write_rows(path, METRIC_COLUMNS, metrics_rows(seed, metrics))
    logger.debug(f"Wrote {len(metrics)} rows to {path}")
    return path


def aligned_steps(eval_every: int, max_env_steps: int) -> List[int]:
    return list(range(eval_every, max_env_steps + 1, eval_every))


def aggregate_metrics(csv_paths: Sequence, steps: Sequence[int]) -> pd.DataFrame:
    """
    Mean and population std across seeds at each aligned step.

    Each seed contributes its latest episode row with env_step <= step; seeds
    without such a row are left out of that step.
    """
    frames = [pd.read_csv(p) for p in csv_paths]
    records = []
    for step in steps:
        latest = [df[df["env_step"] <= step].iloc[-1] for df in frames if (df["env_step"] <= step).any()]
        if not latest:
            continue
        record = {"env_step": int(step), "n_seeds": len(latest)}
        for column in AGGREGATED:
            values = np.array([row[column] for row in latest], dtype=float)
            record[f"{column}_mean"] = float(values.mean())
            record[f"{column}_std"] = float(values.std())
        records.append(record)
    columns = ["env_step", "n_seeds"] + [f"{c}_{s}" for c in AGGREGATED for s in ("mean", "std")]
    return pd.DataFrame.from_records(records, columns=columns)


def write_aggregate_csv(path, aggregate: pd.DataFrame) -> Path:
    path = Path(path)
    rows = []
    for record in aggregate.to_dict("records"):
        rows.append([int(record["env_step"]), int(record["n_seeds"])]
                    + [record[c] for c in aggregate.columns[2:]])
    _write_rows(path, list(aggregate.columns), rows)
    return path


def print_summary(summary: Dict):
    """Print a text summary of a finished run."""
    print("\n" + "=" * 80)
    print(f"SYNCHRONIZED PREDATOR-PREY - {summary['name'].upper()}")
    print("=" * 80)

    print(f"\n{'SETUP':-^80}")
    print(f"  Topology: {summary['topology']}")
    print(f"  Miscapture penalty: {summary['miscapture_penalty']:+g}")
    print(f"  Seeds: {summary['seeds']}")
    print(f"  Env steps per seed: {summary['env_steps']:,}")

    print(f"\n{'FINAL GREEDY EVALUATION':-^80}")
    for seed, value in zip(summary["seeds"], summary["final_eval_returns"]):
        print(f"  Seed {seed:>4}: {value:8.2f}")
    print(f"  ")
    print(f"  Mean: {summary['final_eval_return_mean']:.2f} +/- {summary['final_eval_return_std']:.2f} "
          f"(max achievable {summary['max_episode_reward']:g})")

    fraction = summary["final_eval_return_mean"] / summary["max_episode_reward"]
    if fraction >= 0.75:
        print(f"  ✓ Team captures most prey")
    elif summary["final_eval_return_mean"] <= 0.1 * summary["max_episode_reward"]:
        print(f"  ⚠️  Team rarely captures (capture avoidance)")

    print(f"\n  Wall time: {summary['wall_time_seconds']:.1f}s")
    print("=" * 80 + "\n")


def plot_curves(out_dir, aggregate_name: str = "aggregate.csv", output_name: str = "curves.png") -> Path:
    """
    Train and eval return (mean with shaded std across seeds) versus env step.
    """
    out_path = Path(out_dir)
    df = pd.read_csv(out_path / aggregate_name)

    fig, axes = plt.subplots(1, 2, figsize=(14, 5))
    panels = [
        (axes[0], "train_return", "Train episode return", '#2E86AB'),
        (axes[1], "eval_return_mean", "Greedy eval return", '#A23B72'),
    ]
    for ax, column, title, color in panels:
        mean = df[f"{column}_mean"].to_numpy()
        std = df[f"{column}_std"].to_numpy()
        ax.plot(df["env_step"], mean, linewidth=2, color=color)
        ax.fill_between(df["env_step"], mean - std, mean + std, alpha=0.3, color=color)
        ax.set_xlabel('Environment steps')
        ax.set_ylabel('Return')
        ax.set_title(title)
        ax.grid(True, alpha=0.3)

    plt.tight_layout()
    output_file = out_path / output_name
    plt.savefig(output_file, dpi=150, bbox_inches='tight')
    logger.info(f"Saved learning curves to {output_file}")
    plt.close(fig)
    return output_file
