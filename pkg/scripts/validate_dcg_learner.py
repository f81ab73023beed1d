#!/usr/bin/env python3
"""
Validation tests for the coordination-graph Q-learner.
"""

from dataclasses import replace
from functools import partial
from itertools import product
from pathlib import Path
import sys
import tempfile

import numpy as np

from check_runner import run_checks
from src.config import LearnerConfig, create_preset_config
from src.coord_graph import FactorizedQ, make_topology, q_tot
from src.dcg import (
    DcgOptimizer,
    ReplayBuffer,
    Transition,
    _factor_outputs,
    batch_q_tot,
    dcg_model_new,
    factorize,
    load_checkpoint,
    loss_and_gradients,
    save_checkpoint,
    select_actions,
    stack_batch,
    sync_target,
    td_targets,
    train,
    train_step,
)
from src.errors import CheckpointError, ContractError
from src.experiment import make_env

SYNC_PAYOFF = np.array([[0.0, -2.0], [-2.0, 10.0]])
PAIR = make_topology("full", 2)


def sync_model():
    """Zero-weight model whose payoff output is the 2x2 synchronization game."""
    model = dcg_model_new(1, 2, (4,), seed=0, init_scale=0.0)
    model.payoff.biases[-1][:] = SYNC_PAYOFF.ravel()
    return model


def random_batch(rng, size, n, obs_size, n_actions, terminal=False):
    transitions = []
    for _ in range(size):
        transitions.append(Transition(
            obs=rng.normal(size=(n, obs_size)),
            masks=np.ones((n, n_actions), dtype=bool),
            joint_action=rng.integers(0, n_actions, size=n),
            reward=float(rng.normal()),
            next_obs=rng.normal(size=(n, obs_size)),
            next_masks=np.ones((n, n_actions), dtype=bool),
            terminal=terminal,
        ))
    return stack_batch(transitions)


def params_equal(a, b):
    return all(
        np.array_equal(p, q)
        for net_a, net_b in ((a.utility, b.utility), (a.payoff, b.payoff))
        for p, q in zip(net_a.params(), net_b.params())
    )


def check_factorize():
    """Factorization: empty graph, zero networks, batch agreement and edge symmetry"""
    rng = np.random.default_rng(0)
    model = dcg_model_new(4, 3, (8,), seed=1)
    obs = rng.normal(size=(3, 4))

    empty = make_topology("empty", 3)
    fq = factorize(model, obs, empty)
    assert fq.payoffs == [] and len(fq.utilities) == 3

    zero = dcg_model_new(4, 3, (8,), seed=1, init_scale=0.0)
    full = make_topology("full", 3)
    fq = factorize(zero, obs, full)
    values = {q_tot(fq, full, joint) for joint in product(range(3), repeat=3)}
    assert values == {0.0}, values

    # batch_q_tot agrees with q_tot joint by joint
    utilities, payoffs = _factor_outputs(model, obs[None], full)
    fq = factorize(model, obs, full)
    actions = np.array(list(product(range(3), repeat=3)))
    batched = batch_q_tot(np.repeat(utilities, len(actions), 0), np.repeat(payoffs, len(actions), 0), actions, full)
    direct = [q_tot(fq, full, tuple(j)) for j in actions]
    np.testing.assert_allclose(batched, direct, atol=1e-12)

    pair_obs = rng.normal(size=(2, 4))
    forward_fq = factorize(model, pair_obs, PAIR)
    swapped_fq = factorize(model, pair_obs[::-1], PAIR)
    np.testing.assert_allclose(swapped_fq.payoffs[0], forward_fq.payoffs[0].T, atol=1e-12)


def check_exploration_masks():
    """Uniform exploration only picks available actions"""
    rng = np.random.default_rng(1)
    topology = make_topology("full", 3)
    fq = FactorizedQ(utilities=[np.zeros(6)] * 3, payoffs=[np.zeros((6, 6))] * 3)
    for _ in range(10_000):
        masks = rng.random((3, 6)) < 0.4
        masks[np.arange(3), rng.integers(0, 6, size=3)] = True
        joint = select_actions(fq, topology, masks, 1.0, rng)
        assert all(masks[i, a] for i, a in enumerate(joint)), (masks, joint)
    return "10,000 draws"


def check_greedy_selection():
    """Greedy selection picks the coordinated optimum and exploration is seeded"""
    model = sync_model()
    masks = np.ones((2, 2), dtype=bool)
    fq = factorize(model, np.ones((2, 1)), PAIR, masks)
    np.testing.assert_allclose(fq.payoffs[0], SYNC_PAYOFF)
    assert select_actions(fq, PAIR, masks, 0.0) == (1, 1)
    try:
        select_actions(fq, PAIR, masks, 0.5)
        raise AssertionError("explored without a generator")
    except ContractError:
        pass

    def draws(seed):
        rng = np.random.default_rng(seed)
        return [select_actions(fq, PAIR, masks, 0.5, rng) for _ in range(200)]

    assert draws(4) == draws(4)
    assert len(set(draws(4))) > 1


def check_td_targets():
    """TD targets: terminal, bootstrapped and gamma = 0"""
    target = sync_model()
    ones = np.ones((2, 1))
    masks = np.ones((2, 2), dtype=bool)
    batch = stack_batch([
        Transition(ones, masks, np.array([1, 1]), 10.0, ones, masks, terminal=True),
        Transition(ones, masks, np.array([0, 1]), -2.0, ones, masks, terminal=False),
    ])
    y = td_targets(batch, target, PAIR, gamma=0.9)
    np.testing.assert_allclose(y, [10.0, 7.0], atol=1e-12)
    # Max-Plus bootstrapping is exact on a single edge
    y = td_targets(batch, target, PAIR, gamma=0.9, exhaustive_max_agents=0)
    np.testing.assert_allclose(y, [10.0, 7.0], atol=1e-12)
    np.testing.assert_array_equal(td_targets(batch, target, PAIR, gamma=0.0), batch.rewards)

    # With agent 1 unable to capture, the best next joint is worth 0
    blocked = np.array([[True, True], [True, False]])
    batch = stack_batch([Transition(ones, masks, np.array([0, 0]), 1.0, ones, blocked, terminal=False)])
    np.testing.assert_allclose(td_targets(batch, target, PAIR, gamma=0.5), [1.0], atol=1e-12)


def check_zero_loss():
    """Targets equal to predictions give zero loss and zero gradients"""
    rng = np.random.default_rng(2)
    topology = make_topology("full", 3)
    model = dcg_model_new(4, 3, (8,), seed=2)
    batch = random_batch(rng, 5, 3, 4, 3)
    utilities, payoffs = _factor_outputs(model, batch.obs, topology)
    predictions = batch_q_tot(utilities, payoffs, batch.actions, topology)
    loss, grads_u, grads_p = loss_and_gradients(model, batch, predictions, topology)
    assert loss == 0.0
    assert all(not np.any(g) for g in grads_u + grads_p)


def _numeric(model, net, batch, targets, topology, h=1e-6):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            plus = loss_and_gradients(model, batch, targets, topology)[0]
            p[idx] = old - h
            minus = loss_and_gradients(model, batch, targets, topology)[0]
            p[idx] = old
            g[idx] = (plus - minus) / (2 * h)
        grads.append(g)
    return grads


def check_gradients():
    """Utility and payoff gradients match finite differences"""
    rng = np.random.default_rng(3)
    topology = make_topology("full", 3)
    model = dcg_model_new(2, 2, (3,), seed=3)
    for net in (model.utility, model.payoff):
        for b in net.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
    batch = random_batch(rng, 4, 3, 2, 2)
    targets = rng.normal(size=4)
    _, grads_u, grads_p = loss_and_gradients(model, batch, targets, topology)
    worst = 0.0
    for analytic, net in ((grads_u, model.utility), (grads_p, model.payoff)):
        numeric = _numeric(model, net, batch, targets, topology)
        for a, n in zip(analytic, numeric):
            err = np.max(np.abs(a - n) / np.maximum(1e-4, np.abs(a) + np.abs(n)))
            worst = max(worst, err)
            assert err < 1e-3, f"relative error {err:.2e}"
    return f"worst relative error {worst:.2e}"


def check_fixed_batch_fit():
    """Repeated steps on one terminal batch drive the loss below 10% of its start"""
    rng = np.random.default_rng(4)
    topology = make_topology("full", 2)
    model = dcg_model_new(4, 3, (32,), seed=4)
    target = model.copy()
    opt = DcgOptimizer.for_model(model, 1e-2)
    batch = random_batch(rng, 16, 2, 4, 3, terminal=True)
    config = LearnerConfig()
    losses = [train_step(model, target, batch, opt, topology, config) for _ in range(200)]
    assert losses[-1] < 0.1 * losses[0], f"{losses[0]:.3f} -> {losses[-1]:.3f}"
    return f"loss {losses[0]:.3f} -> {losses[-1]:.4f}"


def check_replay_buffer():
    """Replay memory is FIFO, bounded and samples without replacement"""
    ones = np.ones((2, 1))
    masks = np.ones((2, 2), dtype=bool)
    replay = ReplayBuffer(3)
    for i in range(5):
        replay.add(Transition(ones, masks, np.array([0, 0]), float(i), ones, masks, False))
    assert len(replay) == 3
    assert [t.reward for t in replay.items()] == [2.0, 3.0, 4.0]
    batch = replay.sample(3, np.random.default_rng(0))
    assert sorted(batch.rewards) == [2.0, 3.0, 4.0]
    try:
        replay.sample(4, np.random.default_rng(0))
        raise AssertionError("sampled more transitions than stored")
    except ContractError:
        pass


def check_target_sync():
    """Target sync copies parameters without aliasing them"""
    model = dcg_model_new(3, 2, (5,), seed=5)
    target = model.copy()
    model.utility.weights[0] += 1.0
    assert not params_equal(model, target)
    sync_target(model, target)
    assert params_equal(model, target)
    model.payoff.biases[0] += 1.0
    assert not params_equal(model, target)


def check_empty_topology():
    """Without edges the learner acts greedily per agent and never trains payoffs"""
    rng = np.random.default_rng(6)
    empty = make_topology("empty", 4)
    model = dcg_model_new(3, 4, (8,), seed=6)
    for _ in range(20):
        obs = rng.normal(size=(4, 3))
        masks = rng.random((4, 4)) < 0.6
        masks[:, 0] = True
        fq = factorize(model, obs, empty, masks)
        expected = tuple(int(np.argmax(np.where(m, u, -np.inf))) for u, m in zip(fq.utilities, masks))
        assert select_actions(fq, empty, masks, 0.0) == expected
    batch = random_batch(rng, 6, 4, 3, 4)
    _, _, grads_p = loss_and_gradients(model, batch, rng.normal(size=6), empty)
    assert all(not np.any(g) for g in grads_p)


def _matrix_run(seed):
    config = create_preset_config("matrix")
    learner = replace(config.learner, max_env_steps=300, train_start=32, replay_capacity=200,
                      target_sync_period=50, log_interval=0)
    return train(partial(make_env, config.env), "full", learner, seed, eval_every=100, eval_episodes=1)


def check_training_determinism():
    """Training is reproducible per seed and logs the expected metrics"""
    a, b = _matrix_run(3), _matrix_run(3)
    assert a.metrics == b.metrics
    assert params_equal(a.model, b.model)
    assert a.env_steps == 300 and len(a.metrics) == 300
    assert [step for step, _ in a.evaluations] == [0, 100, 200, 300]
    assert a.metrics[0].loss_mean == 0.0 and a.metrics[-1].loss_mean > 0.0
    assert a.metrics[0].epsilon == 1.0
    assert not params_equal(a.model, _matrix_run(4).model)
    return f"final eval return {a.evaluations[-1][1]:g}"


def check_checkpoint_round_trip():
    """Checkpoints restore the networks and reject foreign configurations"""
    model = dcg_model_new(6, 4, (8, 8), seed=7)
    with tempfile.TemporaryDirectory() as tmp:
        directory = save_checkpoint(model, Path(tmp) / "ckpt", "abc123", step=500, seed=7)
        loaded, manifest = load_checkpoint(directory, config_hash="abc123", obs_size=6, n_actions=4)
        assert params_equal(model, loaded)
        assert manifest["step"] == 500 and manifest["seed"] == 7
        for kwargs in (dict(config_hash="other"), dict(n_actions=5), dict(obs_size=7)):
            try:
                load_checkpoint(directory, **kwargs)
                raise AssertionError(f"accepted {kwargs}")
            except CheckpointError:
                pass
        try:
            load_checkpoint(Path(tmp) / "missing")
            raise AssertionError("loaded a missing directory")
        except CheckpointError:
            pass


if __name__ == "__main__":
    sys.exit(run_checks("DCG LEARNER VALIDATION", [
        check_factorize,
        check_exploration_masks,
        check_greedy_selection,
        check_td_targets,
        check_zero_loss,
        check_gradients,
        check_fixed_batch_fit,
        check_replay_buffer,
        check_target_sync,
        check_empty_topology,
        check_training_determinism,
        check_checkpoint_round_trip,
    ]))
