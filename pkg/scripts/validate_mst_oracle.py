#!/usr/bin/env python3
"""
Validation tests for the exact MST oracle.

Includes the Monte-Carlo agreement check: returns sampled from the environment
under fixed random policies must match the lifted model's expected returns.
"""

from dataclasses import replace
import sys

import numpy as np

from check_runner import run_checks
from src.config import EnvConfig, create_preset_config
from src.errors import ContractError, NumericError, SizeError
from src.grid_env import GridState, SyncPredatorPrey, capture
from src.matrix_game import payoff_table
from src.mst_oracle import (
    Partitioning,
    _backup,
    _greedy_values,
    _grid_labels,
    classify,
    count_grid_states,
    exact_q,
    grid_partitioning,
    is_mst,
    lift_env,
    matrix_game_model,
    one_shot_model,
    policy_return,
    product_policy,
)

TINY = create_preset_config("tiny").env
SYNC_GAME = np.array([[0.0, -2.0], [-2.0, 10.0]])
ONE_SYNC_SET = Partitioning(sync=(frozenset({1}), frozenset({1})))

MC_EPISODES = 10_000
MC_POLICIES = {
    "uniform": ([1, 1, 1, 1, 1, 1], [1, 1, 1, 1, 1, 1]),
    "capture-heavy": ([1, 1, 1, 1, 1, 10], [1, 1, 1, 1, 1, 10]),
    "stay-or-capture": ([5, 0, 0, 0, 0, 1], [5, 0, 0, 0, 0, 1]),
    "restless": ([0.1, 1, 1, 1, 1, 2], [0.1, 1, 1, 1, 1, 2]),
    "asymmetric": ([1, 1, 1, 1, 1, 5], [3, 1, 0, 1, 0, 1]),
}


def check_one_shot_classification():
    """One-shot synchronization game splits into neutral, A+ and A-"""
    q = exact_q(one_shot_model(SYNC_GAME))
    np.testing.assert_allclose(q.values[0], SYNC_GAME.ravel(), atol=1e-12)
    result = classify(q, 0, ONE_SYNC_SET)
    assert result.a_neut == [(0, 0)]
    assert result.a_plus == [(1, 1)]
    assert result.a_minus == [(0, 1), (1, 0)]
    assert is_mst(one_shot_model(SYNC_GAME), ONE_SYNC_SET).is_mst


def check_one_shot_without_penalty():
    """Without the penalty no joint action falls below all-neutral"""
    model = one_shot_model(np.array([[0.0, 0.0], [0.0, 10.0]]))
    result = classify(exact_q(model), 0, ONE_SYNC_SET)
    assert result.a_plus == [(1, 1)] and result.a_minus == []
    assert not is_mst(model, ONE_SYNC_SET).is_mst


def check_penalty_sweep():
    """One-shot game is an MST exactly when the miscapture payoff is negative"""
    for penalty in (-20.0, -2.0, -0.5, -1e-6, 0.0, 1e-6, 0.5, 3.0, 12.0):
        game = np.array([[0.0, penalty], [penalty, 10.0]])
        verdict = is_mst(one_shot_model(game), ONE_SYNC_SET)
        assert verdict.is_mst == (penalty < 0), penalty
    config = create_preset_config("matrix").env
    for penalty in (-3.0, -1.0, -0.01, 0.0):
        game = replace(config, miscapture_penalty=penalty)
        assert is_mst(matrix_game_model(game), grid_partitioning(game)).is_mst == (penalty < 0), penalty


def check_empty_sync_sets():
    """Without synchronization actions every joint action is neutral"""
    q = exact_q(one_shot_model(SYNC_GAME))
    result = classify(q, 0, Partitioning(sync=(frozenset(), frozenset())))
    assert result.a_neut == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert result.a_plus == [] and result.a_minus == []
    config = create_preset_config("matrix").env
    model = matrix_game_model(config)
    assert not is_mst(model, Partitioning(sync=(frozenset(),) * config.n_predators)).is_mst


def check_single_agent():
    """A single agent can never synchronize"""
    model = one_shot_model(np.array([0.0, -2.0, 10.0]))
    assert model.n_agents == 1
    verdict = is_mst(model, Partitioning(sync=(frozenset({1, 2}),)))
    assert not verdict.is_mst and verdict.witnesses == []
    result = classify(verdict.q, 0, Partitioning(sync=(frozenset({1, 2}),)))
    assert result.a_plus == [] and result.a_minus == [(1,)]


def check_matrix_game_model():
    """One-shot game model matches its payoff table and is an MST"""
    config = create_preset_config("matrix").env
    model = matrix_game_model(config)
    assert model.n_decision_states == 1 and model.n_states == 2
    np.testing.assert_array_equal(model.rewards, one_shot_model(payoff_table(config)).rewards)
    assert model.rewards[0].max() == 10.0 and model.rewards[0].min() == -2.0
    assert is_mst(model, grid_partitioning(config)).is_mst


def check_finite_horizon():
    """Finite-horizon models apply exactly horizon backups; unconverged iteration raises"""
    model = replace(one_shot_model(SYNC_GAME), gamma=1.0, horizon=1)
    q = exact_q(model)
    np.testing.assert_array_equal(q.values[0], SYNC_GAME.ravel())
    assert q.iterations == 1
    try:
        exact_q(lift_env(TINY), max_iterations=5)
        raise AssertionError("five sweeps reported convergence")
    except NumericError:
        pass


def check_tiny_lift():
    """Tiny task lifts to 9*8*7 placements plus one terminal state"""
    model = lift_env(TINY)
    assert model.n_states == 505 == count_grid_states(TINY)
    # Four predators, one prey: the second sub-team never captures
    sparse = EnvConfig(grid_size=3, n_predators=4, n_prey=1, subteam_size=2, obs_window=3)
    assert count_grid_states(sparse) == len(_grid_labels(sparse)) == 1 + 15120 + 6 * 72
    assert len(model.joint_actions) == 36
    np.testing.assert_allclose(model.next_probs.sum(axis=2), 1.0, atol=1e-12)
    assert abs(model.start_distribution.sum() - 1.0) < 1e-12
    return f"{model.n_states} states, branching {model.next_states.shape[2]}"


def check_bellman_fixed_point():
    """Value iteration reaches the Bellman fixed point"""
    model = lift_env(TINY)
    q = exact_q(model)
    residual = np.max(np.abs(_backup(model, _greedy_values(model, q.values), model.gamma) - q.values))
    assert residual < 1e-9, residual
    # Both predators flanking the prey: capturing now is optimal and worth exactly 10
    s = model.state_index(GridState(predator_positions=((0, 0), (0, 2)), prey_positions=((0, 1),)))
    cc = model.joint_actions.index((capture(0), capture(0)))
    assert abs(q.values[s, cc] - 10.0) < 1e-9
    assert np.argmax(np.where(model.legal[s], q.values[s], -np.inf)) == cc
    return f"{q.iterations} iterations"


def check_tiny_is_mst():
    """Tiny task with penalty -2 is an MST"""
    verdict = is_mst(lift_env(TINY), grid_partitioning(TINY))
    assert verdict.is_mst and len(verdict.witnesses) >= 1
    return f"{len(verdict.witnesses)} witness states"


def check_tiny_without_penalty():
    """Tiny task without the penalty is not an MST"""
    config = create_preset_config("tiny-nopenalty").env
    verdict = is_mst(lift_env(config), grid_partitioning(config))
    assert not verdict.is_mst, f"{len(verdict.witnesses)} witnesses"


def check_heterogeneous_tiny():
    """Heterogeneous tiny task is an MST"""
    config = create_preset_config("tiny-hetero").env
    verdict = is_mst(lift_env(config), grid_partitioning(config))
    assert verdict.is_mst
    return f"{len(verdict.witnesses)} witness states"


def check_reward_scaling():
    """Scaling rewards by a positive constant leaves the classification unchanged"""
    model = lift_env(TINY)
    scaled = replace(model, rewards=model.rewards * 3.0)
    partitioning = grid_partitioning(TINY)
    base, other = is_mst(model, partitioning), is_mst(scaled, partitioning)
    assert base.witnesses == other.witnesses
    s = base.witnesses[0]
    assert base.classifications[s].a_plus == other.classifications[s].a_plus
    assert base.classifications[s].a_minus == other.classifications[s].a_minus


def check_size_cap():
    """Full-scale tasks are refused with a size error"""
    try:
        lift_env(create_preset_config("2homo").env)
        raise AssertionError("10x10 task was lifted")
    except SizeError as exc:
        assert "tiny" in str(exc)


def check_partitioning_contract():
    """Partitionings outside the action range are rejected"""
    bad = Partitioning(sync=(frozenset({7}), frozenset({5})))
    try:
        classify(exact_q(lift_env(TINY)), 0, bad)
        raise AssertionError("accepted action 7 of 6")
    except ContractError:
        pass


def check_policy_return_one_shot():
    """Uniform play in the one-shot game is worth the mean payoff"""
    model = one_shot_model(SYNC_GAME)
    value = policy_return(model, product_policy(model, [np.ones(2), np.ones(2)]), horizon=1)
    assert abs(value - 1.5) < 1e-12, value


def _mc_returns(weights, episodes, seed):
    env = SyncPredatorPrey(TINY, seed)
    rng = np.random.default_rng(seed + 1)
    probs = [np.asarray(w, dtype=float) for w in weights]
    returns = np.zeros(episodes)
    for episode in range(episodes):
        _, _, masks = env.reset()
        done, total = False, 0.0
        while not done:
            joint = []
            for agent, mask in enumerate(masks):
                p = probs[agent] * mask
                joint.append(int(rng.choice(len(p), p=p / p.sum())))
            _, _, masks, reward, done, _ = env.step(joint)
            total += reward
        returns[episode] = total
    return returns


def check_monte_carlo_agreement():
    """Sampled returns match the model's expected returns within 3 standard errors"""
    model = lift_env(TINY)
    lines = []
    for number, (name, weights) in enumerate(MC_POLICIES.items()):
        expected = policy_return(model, product_policy(model, weights), horizon=TINY.max_steps)
        returns = _mc_returns(weights, MC_EPISODES, seed=1000 + number)
        se = returns.std(ddof=1) / np.sqrt(len(returns))
        gap = abs(returns.mean() - expected)
        print(f"  {name:<16} model {expected:8.4f}  sampled {returns.mean():8.4f}  se {se:.4f}")
        assert gap <= max(3 * se, 1e-9), f"{name}: gap {gap:.4f} > 3 se ({3 * se:.4f})"
        lines.append(name)
    return f"{len(lines)} policies agree"


if __name__ == "__main__":
    sys.exit(run_checks("MST ORACLE VALIDATION", [
        check_one_shot_classification,
        check_one_shot_without_penalty,
        check_penalty_sweep,
        check_empty_sync_sets,
        check_single_agent,
        check_matrix_game_model,
        check_finite_horizon,
        check_tiny_lift,
        check_bellman_fixed_point,
        check_tiny_is_mst,
        check_tiny_without_penalty,
        check_heterogeneous_tiny,
        check_reward_scaling,
        check_size_cap,
        check_partitioning_contract,
        check_policy_return_one_shot,
        check_monte_carlo_agreement,
    ]))
