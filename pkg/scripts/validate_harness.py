#!/usr/bin/env python3
"""
Validation tests for configuration, the experiment runner and the CLI.

Runs a few short training jobs on the tiny task (a couple of minutes in total).
"""

from pathlib import Path
import csv
import json
import os
import sys
import tempfile

import numpy as np
import yaml

from check_runner import run_checks
from src.cli import main
from src.config import create_preset_config
from src.config_loader import config_from_dict, load_config_from_yaml, save_config_yaml
from src.dcg import dcg_model_new, save_checkpoint
from src.errors import CheckpointError, ConfigError, SizeError
from src.experiment import THREADS_ENV, render, run_experiment, verify, worker_count
from src.grid_env import parse_ascii
from src.matrix_game import payoff_table
from src.visualization import AGGREGATED, format_value, plot_curves

SHORT_TINY = {
    "preset": "tiny",
    "name": "tiny-short",
    "seeds": [0, 1],
    "eval_every": 100,
    "eval_episodes": 1,
    "learner.max_env_steps": 400,
    "learner.train_start": 32,
    "learner.replay_capacity": 500,
    "learner.target_sync_period": 100,
    "learner.hidden_sizes": [16],
    "learner.log_interval": 0,
}


class threads:
    """Temporarily set the worker cap."""

    def __init__(self, value):
        self.value = value

    def __enter__(self):
        self.saved = os.environ.get(THREADS_ENV)
        if self.value is None:
            os.environ.pop(THREADS_ENV, None)
        else:
            os.environ[THREADS_ENV] = str(self.value)

    def __exit__(self, *exc):
        if self.saved is None:
            os.environ.pop(THREADS_ENV, None)
        else:
            os.environ[THREADS_ENV] = self.saved


def check_presets():
    """Named presets have the published team layouts"""
    homo = create_preset_config("2homo").env
    assert (homo.grid_size, homo.n_predators, homo.n_prey, homo.max_steps) == (10, 8, 8, 200)
    assert homo.n_actions == 6 and homo.obs_size == 52 and homo.max_episode_reward == 40.0
    hetero = create_preset_config("3hetero").env
    assert hetero.n_predators == 9 and hetero.n_subteams == 3 and hetero.n_capture_actions == 3
    assert hetero.max_episode_reward == 30.0
    assert create_preset_config("desk-2homo-nopenalty").env.miscapture_penalty == 0.0

    matrix = create_preset_config("matrix")
    assert matrix.env.n_actions == 10 and matrix.learner.decay_steps == 3000
    # Against a uniformly exploring partner a capture pays less than any neutral action
    row_means = payoff_table(matrix.env).mean(axis=1)
    assert row_means[-1] < row_means[:-1].min(), row_means
    np.testing.assert_allclose(row_means, [-0.2] * 9 + [-0.8], atol=1e-12)
    try:
        create_preset_config("4homo")
        raise AssertionError("unknown preset accepted")
    except ConfigError:
        pass


def check_config_loader():
    """YAML files: presets, dotted keys, round trips and rejected keys"""
    config = config_from_dict(SHORT_TINY)
    assert config.env.grid_size == 3 and config.learner.max_env_steps == 400
    assert config.learner.hidden_sizes == (16,) and config.seeds == [0, 1]
    assert config_from_dict({"preset": "tiny"}, preset="2homo").env.grid_size == 10

    nested = config_from_dict({"env": {"grid_size": 6, "obs_window": 3}, "experiment": {"topology": "empty"}})
    assert nested.env.grid_size == 6 and nested.topology == "empty"

    for bad in ({"env": {"grid_sise": 6}}, {"learning_rate": 0.1}, {"env.subteam_size": 3},
                {"learner": {"gamma": "high"}}, {"topology": "star"}):
        try:
            config_from_dict(bad)
            raise AssertionError(f"accepted {bad}")
        except ConfigError:
            pass

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "config.yaml"
        save_config_yaml(config, path)
        assert load_config_from_yaml(path) == config
        path.write_text("env: [1, 2\n")
        try:
            load_config_from_yaml(path)
            raise AssertionError("malformed YAML accepted")
        except ConfigError:
            pass
        try:
            load_config_from_yaml(Path(tmp) / "missing.yaml")
            raise AssertionError("missing file accepted")
        except FileNotFoundError:
            pass


def check_worker_count():
    """Worker pool size honors the thread cap"""
    with threads(1):
        assert worker_count(5) == 1
    with threads(3):
        assert worker_count(5) == 3 and worker_count(2) == 2
    for bad in ("0", "many"):
        with threads(bad):
            try:
                worker_count(4)
                raise AssertionError(f"accepted {THREADS_ENV}={bad}")
            except ConfigError:
                pass


def check_verify():
    """MST verification on tiny tasks and refusal on full-size ones"""
    tiny = verify(create_preset_config("tiny"))
    assert tiny["is_mst"] and tiny["witness_count"] >= 1 and tiny["n_states"] == 505
    assert tiny["n_decision_states"] == 504
    witness = tiny["example_witness"]
    assert witness["a_plus"] and witness["a_minus"]
    assert all(name.startswith("Capture") for joint in witness["a_plus"] for name in joint)
    assert not verify(create_preset_config("tiny-nopenalty"))["is_mst"]
    matrix = verify(create_preset_config("matrix"))
    assert matrix["is_mst"] and matrix["n_states"] == 2 and matrix["n_decision_states"] == 1
    assert matrix["example_witness"]["a_plus"] == [["Capture0", "Capture0"]]
    try:
        verify(create_preset_config("2homo"))
        raise AssertionError("verified a 10x10 task")
    except SizeError:
        pass
    return f"{tiny['witness_count']} witness states"


def check_cli_exit_codes():
    """CLI exit codes for success, bad configs, oversized tasks and I/O failures"""
    with tempfile.TemporaryDirectory() as tmp:
        assert main(["-q", "verify", "--preset", "tiny", "--out", tmp]) == 0
        verdict = json.loads((Path(tmp) / "verdict.json").read_text())
        assert verdict["is_mst"] is True
        assert main(["-q", "verify", "--preset", "2homo"]) == 2
        assert main(["-q", "run", "--preset", "nope"]) == 2
        assert main(["-q", "sweep", "--preset", "tiny", "--seeds", "a,b"]) == 2
        assert main(["-q", "run", str(Path(tmp) / "missing.yaml")]) == 3
        (Path(tmp) / "bad.yaml").write_text("env:\n  n_predators: 7\n")
        assert main(["-q", "verify", str(Path(tmp) / "bad.yaml")]) == 2


def check_cli_sweep():
    """CLI sweep trains an explicit seed list from a YAML file"""
    with tempfile.TemporaryDirectory() as tmp, threads(1):
        config_path = Path(tmp) / "short.yaml"
        config_path.write_text(yaml.safe_dump(SHORT_TINY))
        out = Path(tmp) / "out"
        assert main(["-q", "sweep", str(config_path), "--seeds", "3", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["seeds"] == [3] and summary["name"] == "tiny-short"
        assert (out / "metrics_seed3.csv").exists() and not (out / "metrics_seed0.csv").exists()
        assert (out / "checkpoints" / "seed3" / "manifest.json").exists()


def _read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def check_reproducible_runs():
    """Same config and seeds give byte-identical metrics, serial or parallel"""
    config = config_from_dict(SHORT_TINY)
    with tempfile.TemporaryDirectory() as tmp:
        with threads(1):
            run_experiment(config, str(Path(tmp) / "a"))
            run_experiment(config, str(Path(tmp) / "b"))
        with threads(2):
            run_experiment(config, str(Path(tmp) / "c"))
        for name in ("metrics_seed0.csv", "metrics_seed1.csv", "aggregate.csv"):
            a = (Path(tmp) / "a" / name).read_bytes()
            assert a == (Path(tmp) / "b" / name).read_bytes(), f"{name} differs between runs"
            assert a == (Path(tmp) / "c" / name).read_bytes(), f"{name} differs with 2 workers"
        ckpt = Path("checkpoints") / "seed1" / "payoff.sgmlp"
        assert (Path(tmp) / "a" / ckpt).read_bytes() == (Path(tmp) / "c" / ckpt).read_bytes()
        rows = _read_rows(Path(tmp) / "a" / "metrics_seed0.csv")
        assert int(rows[-1]["env_step"]) == 400
        assert list(rows[0]) == ["seed", "episode", "env_step", "train_return", "length",
                                 "eval_return_mean", "epsilon", "loss_mean", "captures", "miscaptures"]


def check_aggregate_and_summary():
    """aggregate.csv matches an independent recomputation and summary.json is complete"""
    config = config_from_dict(SHORT_TINY)
    with tempfile.TemporaryDirectory() as tmp, threads(1):
        result = run_experiment(config, tmp)
        per_seed = [_read_rows(Path(tmp) / f"metrics_seed{s}.csv") for s in config.seeds]
        aggregate = _read_rows(Path(tmp) / "aggregate.csv")
        assert [int(r["env_step"]) for r in aggregate] == [100, 200, 300, 400]
        for row in aggregate:
            step = int(row["env_step"])
            latest = [[r for r in rows if int(r["env_step"]) <= step][-1] for rows in per_seed]
            assert int(row["n_seeds"]) == len(latest)
            for column in AGGREGATED:
                values = np.array([float(r[column]) for r in latest])
                assert row[f"{column}_mean"] == format_value(values.mean()), (step, column)
                assert row[f"{column}_std"] == format_value(values.std()), (step, column)

        summary = json.loads((Path(tmp) / "summary.json").read_text())
        assert summary == json.loads(json.dumps(result.summary))
        assert summary["seeds"] == [0, 1] and summary["env_steps"] == 400
        assert len(summary["final_eval_returns"]) == 2
        assert abs(summary["final_eval_return_mean"] - np.mean(summary["final_eval_returns"])) < 1e-12
        assert summary["config_hash"] == config.config_hash()
        assert yaml.safe_load((Path(tmp) / "config.yaml").read_text())["env"]["grid_size"] == 3

        chart = plot_curves(tmp)
        assert chart.exists() and chart.stat().st_size > 0


def check_render():
    """Greedy playback of an untrained model fills the time limit with frames"""
    config = config_from_dict(SHORT_TINY)
    env = config.env
    model = dcg_model_new(env.obs_size, env.n_actions, config.learner.hidden_sizes, seed=0, init_scale=0.0)
    with tempfile.TemporaryDirectory() as tmp:
        ckpt = save_checkpoint(model, Path(tmp) / "ckpt", config.config_hash(), step=0, seed=0)
        lines = []
        trace = Path(tmp) / "trace.jsonl"
        records = render(ckpt, config, seed=5, trace_path=trace, emit=lines.append)
        parsed = [json.loads(line) for line in trace.read_text().splitlines()]
        assert parsed == records
        assert len(records) == env.max_steps
        assert [r["step"] for r in records] == list(range(1, env.max_steps + 1))
        assert records[-1]["done"] and not any(r["done"] for r in records[:-1])
        assert all(r["joint_action"] == ["Stay", "Stay"] for r in records)
        assert sum(1 for line in lines if line.startswith("step ")) == env.max_steps + 1

        # The last frame parses back to the recorded positions
        # Emitted as header, board, blank line; a closing return line follows
        state = parse_ascii(lines[-3], env.n_predators)
        positions = [tuple(p) for p in records[-1]["positions"]["predators"]]
        assert list(state.predator_positions) == positions

        other = config_from_dict(dict(SHORT_TINY, **{"learner.gamma": 0.9}))
        try:
            render(ckpt, other, seed=5, emit=lines.append)
            raise AssertionError("rendered with a mismatched config")
        except CheckpointError:
            pass
        try:
            render(ckpt, create_preset_config("matrix"), seed=5, emit=lines.append)
            raise AssertionError("rendered the one-shot game")
        except ConfigError:
            pass


if __name__ == "__main__":
    sys.exit(run_checks("HARNESS VALIDATION", [
        check_presets,
        check_config_loader,
        check_worker_count,
        check_verify,
        check_cli_exit_codes,
        check_cli_sweep,
        check_reproducible_runs,
        check_aggregate_and_summary,
        check_render,
    ]))
