"""
Experiment orchestration: multi-seed training runs, MST verification and
greedy episode playback.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence
import json
import logging
import os
import time

import numpy as np

from .config import EnvConfig, ExperimentConfig
from .config_loader import save_config_yaml
from .dcg import (
    greedy_episode,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .coord_graph import make_topology
from .errors import ConfigError
from .grid_env import SyncPredatorPrey, render_ascii, step_record
from .matrix_game import OneShotGame
from .mst_oracle import describe_state, grid_partitioning, is_mst, lift_env
from .visualization import (
    aggregate_metrics,
    aligned_steps,
    write_aggregate_csv,
    write_metrics_csv,
)

logger = logging.getLogger(__name__)

THREADS_ENV = "SYNCGRID_THREADS"


def make_env(env_config: EnvConfig, seed: int):
    """Environment for the configured task."""
    if env_config.task == "matrix":
        return OneShotGame(env_config, seed)
    return SyncPredatorPrey(env_config, seed)


def worker_count(n_jobs: int) -> int:
    limit = os.cpu_count() or 1
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            limit = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
        if limit < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return max(1, min(n_jobs, limit))


@dataclass
class SeedResult:
    seed: int
    csv_path: str
    checkpoint_dir: str
    final_eval_return: float
    env_steps: int
    episodes: int
    wall_time_seconds: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    out_dir: Path
    seeds: List[SeedResult] = field(default_factory=list)
    summary: Dict = field(default_factory=dict)


def run_seed(config: ExperimentConfig, seed: int, out_dir: str) -> SeedResult:
    """Train one seed and write its metrics CSV and checkpoint."""
    start = time.perf_counter()
    out = Path(out_dir)
    logger.info(f"[{config.name}] seed {seed}: training {config.learner.max_env_steps:,} steps "
                f"on the {config.topology} topology")
    result = train(
        partial(make_env, config.env),
        config.topology,
        config.learner,
        seed,
        eval_every=config.eval_every,
        eval_episodes=config.eval_episodes,
    )
    csv_path = write_metrics_csv(out / f"metrics_seed{seed}.csv", seed, result.metrics)
    checkpoint_dir = save_checkpoint(
        result.model, out / "checkpoints" / f"seed{seed}", config.config_hash(), result.env_steps, seed
    )
    final_eval = result.evaluations[-1][1] if result.evaluations else float("nan")
    elapsed = time.perf_counter() - start
    logger.info(f"[{config.name}] seed {seed}: done in {elapsed:.1f}s, final eval return {final_eval:.2f}")
    return SeedResult(
        seed=seed,
        csv_path=str(csv_path),
        checkpoint_dir=str(checkpoint_dir),
        final_eval_return=float(final_eval),
        env_steps=result.env_steps,
        episodes=len(result.metrics),
        wall_time_seconds=elapsed,
    )


def run_experiment(config: ExperimentConfig, out_dir: Optional[str] = None) -> ExperimentResult:
    """
    Train every seed, then aggregate.

    Writes metrics_seed<N>.csv per seed, aggregate.csv, summary.json, the
    resolved config.yaml and one checkpoint directory per seed.
    """
    start = time.perf_counter()
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config_yaml(config, out / "config.yaml")

    workers = worker_count(len(config.seeds))
    logger.info(f"Running {len(config.seeds)} seed(s) with {workers} worker(s); output in {out}")
    if workers == 1:
        seeds = [run_seed(config, seed, str(out)) for seed in config.seeds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            seeds = list(pool.map(run_seed, [config] * len(config.seeds), config.seeds,
                                  [str(out)] * len(config.seeds)))

    aggregate = aggregate_metrics(
        [s.csv_path for s in seeds], aligned_steps(config.eval_every, config.learner.max_env_steps)
    )
    write_aggregate_csv(out / "aggregate.csv", aggregate)

    finals = np.array([s.final_eval_return for s in seeds])
    summary = {
        "name": config.name,
        "config_hash": config.config_hash(),
        "topology": config.topology,
        "capture_mode": config.env.capture_mode,
        "miscapture_penalty": config.env.miscapture_penalty,
        "seeds": [s.seed for s in seeds],
        "env_steps": config.learner.max_env_steps,
        "final_eval_returns": [float(v) for v in finals],
        "final_eval_return_mean": float(finals.mean()),
        "final_eval_return_std": float(finals.std()),
        "max_episode_reward": config.env.max_episode_reward,
        "wall_time_seconds": time.perf_counter() - start,
    }
    with open(out / "summary.json", 'w') as f:
        json.dump(summary, f, indent=2)
    logger.info(f"Wrote aggregate and summary to {out}")
    return ExperimentResult(config=config, out_dir=out, seeds=seeds, summary=summary)


def sweep(config: ExperimentConfig, seeds: Sequence[int], out_dir: Optional[str] = None) -> ExperimentResult:
    """run_experiment over an explicit seed list."""
    return run_experiment(replace(config, seeds=list(seeds)), out_dir)


def _joint_names(model, joints) -> List[List[str]]:
    return [[model.action_labels[a] for a in joint] for joint in joints]


def verify(config: ExperimentConfig) -> Dict:
    """
    Certify whether the configured task is an MST.

    Raises SizeError when the task is too large to enumerate.
    """
    model = lift_env(config.env, gamma=config.learner.gamma)
    verdict = is_mst(model, grid_partitioning(config.env))
    document = {
        "task": config.env.task,
        "capture_mode": config.env.capture_mode,
        "capture_reward": config.env.capture_reward,
        "miscapture_penalty": config.env.miscapture_penalty,
        "gamma": config.learner.gamma,
        "n_states": model.n_states,
        "n_decision_states": model.n_decision_states,
        "is_mst": verdict.is_mst,
        "witness_count": len(verdict.witnesses),
        "example_witness": None,
    }
    if verdict.witnesses:
        s = verdict.witnesses[0]
        found = verdict.classifications[s]
        grid_size = config.env.grid_size if config.env.task == "grid" else None
        document["example_witness"] = {
            "state": s,
            "state_text": describe_state(model, s, grid_size),
            "a_neut": _joint_names(model, found.a_neut),
            "a_plus": _joint_names(model, found.a_plus),
            "a_minus": _joint_names(model, found.a_minus),
        }
    return document


def render(
    checkpoint_dir,
    config: ExperimentConfig,
    seed: int,
    trace_path=None,
    emit: Callable[[str], None] = print,
) -> List[Dict]:
    """
    Greedy playback of a checkpoint, one ASCII frame per step.

    Returns the trace records; with trace_path they are also written as JSON
    lines.
    """
    if config.env.task != "grid":
        raise ConfigError("Rendering needs a grid task")
    env = make_env(config.env, seed)
    model, manifest = load_checkpoint(
        checkpoint_dir, config_hash=config.config_hash(), obs_size=env.obs_size, n_actions=env.n_actions
    )
    logger.info(f"Loaded checkpoint from step {manifest['step']:,} of seed {manifest['seed']}")
    topology = make_topology(config.topology, env.n_agents)
    records: List[Dict] = []

    def on_step(state, joint, reward, info, done):
        # The reset frame is shown but not recorded
        header = f"step {state.step}"
        if joint is not None:
            record = step_record(state, joint, reward, info, done)
            records.append(record)
            header += f"  actions {' '.join(record['joint_action'])}  reward {reward:+g}"
        emit(header)
        emit(render_ascii(state, config.env.grid_size))
        emit("")

    total, length, captures, miscaptures = greedy_episode(
        model,
        env,
        topology,
        config.learner.max_plus_iterations,
        config.learner.max_plus_damping,
        on_step=on_step,
    )
    emit(f"return {total:+g} in {length} steps ({captures} captures, {miscaptures} miscaptures)")

    if trace_path is not None:
        with open(trace_path, 'w') as f:
            for record in records:
                f.write(json.dumps(record) + "\n")
        logger.info(f"Wrote {len(records)} trace records to {trace_path}")
    return records
