#!/usr/bin/env python3
"""
Learning-trend checks for the coordination-graph learner.

The default run trains the one-shot synchronization game on 10 seeds with and
without payoff edges (a few minutes). Pass --long to also train the desk-scale
gridworld on 10 seeds for both topologies, with and without the miscapture
penalty: 40 runs of 100,000 steps, roughly 9 CPU-hours. With
SYNCGRID_THREADS >= 5 (ideally 10) cores it fits in about two hours.

These are statistical trends, not guarantees: a FAIL here is reported as is.
"""

from dataclasses import replace
from itertools import product
import sys
import tempfile

import numpy as np

from check_runner import run_checks
from src.config import create_preset_config
from src.coord_graph import make_topology, q_tot
from src.dcg import factorize, load_checkpoint, select_actions
from src.experiment import make_env, run_experiment

MATRIX_SEEDS = list(range(10))
DESK_SEEDS = list(range(10))

_cache = {}


def trained(preset, topology, seeds):
    """Final greedy eval returns and trained models per seed (cached)."""
    key = (preset, topology)
    if key not in _cache:
        config = replace(create_preset_config(preset), topology=topology, seeds=list(seeds))
        with tempfile.TemporaryDirectory() as tmp:
            result = run_experiment(config, tmp)
            models = [load_checkpoint(s.checkpoint_dir)[0] for s in result.seeds]
        returns = np.array(result.summary["final_eval_returns"])
        _cache[key] = (config, returns, models)
        print(f"  {preset}/{topology}: {returns.round(2).tolist()}")
    return _cache[key]


def matrix_tables(topology_kind):
    """Greedy joint action and q_tot table of every one-shot seed."""
    config, _, models = trained("matrix", topology_kind, MATRIX_SEEDS)
    env = make_env(config.env, 0)
    _, obs, masks = env.reset()
    topology = make_topology(topology_kind, env.n_agents)
    joints = list(product(range(env.n_actions), repeat=env.n_agents))
    tables = []
    for model in models:
        fq = factorize(model, obs, topology, masks)
        greedy = select_actions(fq, topology, masks, 0.0)
        table = {joint: q_tot(fq, topology, joint) for joint in joints}
        tables.append((greedy, table))
    return config.env.n_neutral, tables


def check_matrix_full_coordinates():
    """Full topology settles on the joint capture in the one-shot game"""
    capture, tables = matrix_tables("full")
    synced = sum(greedy == (capture, capture) for greedy, _ in tables)
    assert synced >= 9, f"only {synced}/10 seeds capture together"
    return f"{synced}/10 seeds capture together"


def check_matrix_learned_ordering():
    """Full topology ranks joint capture over neutral play over mixed play"""
    capture, tables = matrix_tables("full")
    ordered = 0
    for _, table in tables:
        n_sync = {joint: sum(a == capture for a in joint) for joint in table}
        neutral = [q for joint, q in table.items() if n_sync[joint] == 0]
        mixed = [q for joint, q in table.items() if n_sync[joint] == 1]
        both = table[(capture, capture)]
        ordered += both > max(neutral) and min(neutral) > max(mixed)
    assert ordered >= 9, f"ordering holds in only {ordered}/10 seeds"
    return f"ordering holds in {ordered}/10 seeds"


def check_matrix_empty_stays_neutral():
    """Without edges the greedy joint action is all-neutral in the one-shot game"""
    capture, tables = matrix_tables("empty")
    neutral = sum(all(a < capture for a in greedy) for greedy, _ in tables)
    assert neutral >= 9, f"only {neutral}/10 seeds stay neutral"
    return f"{neutral}/10 seeds stay neutral"


def check_desk_full_with_penalty():
    """With the penalty, payoff edges reach at least 15 of 20 on the desk-scale grid"""
    _, full, _ = trained("desk-2homo", "full", DESK_SEEDS)
    assert full.mean() >= 15.0, f"full {full.mean():.2f}"
    return f"full {full.mean():.2f}"


def check_desk_empty_with_penalty():
    """With the penalty, independent utilities stay at or below 2 on the desk-scale grid"""
    _, full, _ = trained("desk-2homo", "full", DESK_SEEDS)
    _, empty, _ = trained("desk-2homo", "empty", DESK_SEEDS)
    assert empty.mean() <= 2.0, f"empty {empty.mean():.2f}"
    assert full.mean() > empty.mean()
    return f"empty {empty.mean():.2f} vs full {full.mean():.2f}"


def check_desk_without_penalty():
    """Without the penalty both topologies reach at least 15 of 20"""
    _, full, _ = trained("desk-2homo-nopenalty", "full", DESK_SEEDS)
    _, empty, _ = trained("desk-2homo-nopenalty", "empty", DESK_SEEDS)
    assert full.mean() >= 15.0, f"full {full.mean():.2f}"
    assert empty.mean() >= 15.0, f"empty {empty.mean():.2f}"
    return f"full {full.mean():.2f}, empty {empty.mean():.2f}"


if __name__ == "__main__":
    checks = [check_matrix_full_coordinates, check_matrix_learned_ordering, check_matrix_empty_stays_neutral]
    if "--long" in sys.argv[1:]:
        checks += [check_desk_full_with_penalty, check_desk_empty_with_penalty, check_desk_without_penalty]
    sys.exit(run_checks("LEARNING TREND VALIDATION", checks))
