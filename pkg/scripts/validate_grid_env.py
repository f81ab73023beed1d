#!/usr/bin/env python3
"""
Validation tests for the Synchronized Predator-Prey environment.
"""

import json
import sys

import numpy as np

from check_runner import run_checks
from src.config import EnvConfig, create_preset_config
from src.errors import ConfigError, ContractError
from src.grid_env import (
    CAPTURE_BASE,
    GridState,
    Move,
    SyncPredatorPrey,
    action_name,
    availability,
    available_actions,
    capture,
    enumerate_prey_moves,
    env_new,
    observe,
    parse_ascii,
    render_ascii,
    resolve_predators,
    step_record,
)

TINY = create_preset_config("tiny").env
TINY_HETERO = create_preset_config("tiny-hetero").env

# Agent 0 in the corner, agent 1 to its right, a prey below it
CORNER_STATE = GridState(
    predator_positions=((0, 0), (0, 1), (5, 5), (5, 7), (7, 5), (7, 7), (9, 9), (9, 7)),
    prey_positions=((1, 0), (2, 9), (3, 3), (3, 5), (3, 7), (4, 9), (6, 0), (8, 2)),
)


def flanked(config, rows, actions_per_team):
    """Sub-teams around one prey each, remaining prey parked on the last row."""
    predators, prey = [], []
    for r in rows:
        prey.append((r, 1))
        team = [(r, 0), (r, 2), (r + 1, 1)][: config.subteam_size]
        predators.extend(team)
    free = [(config.grid_size - 1, c) for c in range(0, config.grid_size, 2)]
    prey.extend(free[: config.n_prey - len(prey)])
    joint = [a for _ in rows for a in actions_per_team]
    return GridState(predator_positions=tuple(predators), prey_positions=tuple(prey)), joint


def check_action_encoding():
    """Action encoding and per-agent action counts"""
    assert [m.value for m in Move] == [0, 1, 2, 3, 4]
    assert action_name(CAPTURE_BASE) == "Capture0"
    assert action_name(Move.UP) == "Up"
    assert create_preset_config("2homo").env.n_actions == 6
    assert create_preset_config("2hetero").env.n_actions == 7
    assert create_preset_config("3hetero").env.n_actions == 8
    return "6 / 7 / 8 actions"


def check_reset_determinism():
    """Reset places agents on distinct cells, reproducibly per seed"""
    config = create_preset_config("2homo").env
    a, obs_a, masks_a = env_new(config, 7).reset()
    b, obs_b, masks_b = env_new(config, 7).reset()
    c, _, _ = env_new(config, 8).reset()
    cells = a.predator_positions + a.prey_positions
    assert len(set(cells)) == 16
    assert a == b and np.array_equal(obs_a, obs_b) and np.array_equal(masks_a, masks_b)
    assert a != c, "different seeds gave the same start"
    assert obs_a.shape == (8, 52) and masks_a.shape == (8, 6)


def check_observation_window():
    """Observation window: off-grid marks, ids, prey and own position"""
    config = create_preset_config("2homo").env
    obs = observe(config, CORNER_STATE, 0)
    w = config.obs_window
    channel1, channel2 = obs[: w * w], obs[w * w: 2 * w * w]
    # 25 window cells minus the 3x3 that lie on the grid
    assert np.sum(channel1 == -1.0) == 16, np.sum(channel1 == -1.0)
    assert np.sum(channel2 == -1.0) == 16
    # Agent 1 at relative (0, +1) -> window (2, 3); prey at (+1, 0) -> window (3, 2)
    assert channel1[2 * w + 3] == 2 / 8
    assert channel2[3 * w + 2] == 1.0
    assert np.sum(channel1 > 0) == 1 and np.sum(channel2 > 0) == 1
    assert obs[-2] == 0.0 and obs[-1] == 0.0
    assert obs.shape == (config.obs_size,)


def check_masks():
    """Masks block walls, occupied cells and captures without an adjacent prey"""
    config = create_preset_config("2homo").env
    mask = available_actions(config, CORNER_STATE, 0)
    expected = np.array([True, False, False, False, False, True])
    assert np.array_equal(mask, expected), mask
    far = available_actions(config, CORNER_STATE, 2)
    assert far[Move.STAY] and not far[CAPTURE_BASE]
    assert availability(config, CORNER_STATE).shape == (8, 6)


def check_homogeneous_capture():
    """Two adjacent predators capturing together earn the capture reward"""
    env = SyncPredatorPrey(TINY, 0)
    env.reset_to(GridState(predator_positions=((0, 0), (0, 2)), prey_positions=((0, 1),)))
    state, _, _, reward, done, info = env.step([capture(0), capture(0)])
    assert reward == 10.0 and info["captures"] == 1 and done
    assert state.prey_positions == (None,)
    assert state.predator_positions == (None, None)
    assert not info["truncated"]


def check_miscapture():
    """A lone capture attempt costs the miscapture penalty"""
    env = SyncPredatorPrey(TINY, 0)
    env.reset_to(GridState(predator_positions=((0, 0), (0, 2)), prey_positions=((0, 1),)))
    state, _, _, reward, done, info = env.step([capture(0), Move.STAY])
    assert reward == -2.0 and info["miscaptures"] == 1 and info["captures"] == 0
    assert not done and state.prey_positions[0] is not None


def check_heterogeneous_capture():
    """Heterogeneous capture needs every distinct capture action"""
    start = GridState(predator_positions=((0, 0), (0, 2)), prey_positions=((0, 1),))
    _, reward, captures, miscaptures = resolve_predators(TINY_HETERO, start, [capture(0), capture(0)])
    assert (reward, captures, miscaptures) == (-2.0, 0, 1)
    _, reward, captures, miscaptures = resolve_predators(TINY_HETERO, start, [capture(0), capture(1)])
    assert (reward, captures, miscaptures) == (10.0, 1, 0)


def check_contract_violations():
    """Unavailable actions and stepping after the end are rejected"""
    env = SyncPredatorPrey(TINY, 0)
    env.reset_to(GridState(predator_positions=((0, 0), (0, 2)), prey_positions=((0, 1),)))
    try:
        env.step([Move.UP, Move.STAY])
        raise AssertionError("moving off the grid was accepted")
    except ContractError:
        pass
    env.step([capture(0), capture(0)])
    try:
        env.step([Move.STAY, Move.STAY])
        raise AssertionError("step after done was accepted")
    except ContractError:
        pass


def check_time_limit():
    """Episodes end at max_steps with a truncation flag"""
    env = SyncPredatorPrey(TINY, 3)
    env.reset()
    total, steps, done, info = 0.0, 0, False, {}
    while not done:
        _, _, _, reward, done, info = env.step([Move.STAY, Move.STAY])
        total += reward
        steps += 1
    assert steps == TINY.max_steps and total == 0.0 and info["truncated"]


def check_max_episode_reward():
    """Scripted optimal play reaches the maximum episode reward"""
    results = []
    for preset, expected in (("2homo", 40.0), ("2hetero", 40.0), ("3homo", 30.0), ("3hetero", 30.0)):
        config = create_preset_config(preset).env
        assert config.max_episode_reward == expected
        if config.subteam_size == 2:
            rows = [0, 2, 4, 6]
        else:
            rows = [0, 3, 6]
        team_actions = [capture(k if config.capture_mode == "heterogeneous" else 0)
                        for k in range(config.subteam_size)]
        start, joint = flanked(config, rows, team_actions)
        env = SyncPredatorPrey(config, 0)
        env.reset_to(start)
        _, _, _, reward, done, info = env.step(joint)
        assert reward == expected and done and info["captures"] == config.n_subteams, (preset, reward)
        results.append(f"{preset}={reward:g}")
    return ", ".join(results)


def check_seeded_trajectories():
    """Identical seeds give identical trajectories under a seeded random policy"""
    config = create_preset_config("desk-2homo").env

    def trajectory(seed):
        env = SyncPredatorPrey(config, seed)
        rng = np.random.default_rng(99)
        state, _, masks = env.reset()
        states, done = [state], False
        while not done:
            joint = [int(rng.choice(np.flatnonzero(m))) for m in masks]
            state, _, masks, _, done, _ = env.step(joint)
            states.append(state)
        return states

    assert trajectory(5) == trajectory(5)


FUZZ_PRESETS = {"desk-2homo": 60, "desk-2homo-nopenalty": 60, "tiny-hetero": 200, "2hetero": 10}


def _live(positions):
    return [p for p in positions if p is not None]


def _check_state(config, state, obs, masks):
    cells = _live(state.predator_positions) + _live(state.prey_positions)
    assert len(set(cells)) == len(cells), f"overlap in {state}"
    assert all(0 <= r < config.grid_size and 0 <= c < config.grid_size for r, c in cells)
    removed = sum(p is None for p in state.predator_positions)
    assert removed == state.captures_done * config.subteam_size
    assert sum(p is None for p in state.prey_positions) == state.captures_done
    prey = _live(state.prey_positions)
    for agent, pos in enumerate(state.predator_positions):
        captures = masks[agent, CAPTURE_BASE:]
        if pos is None:
            assert masks[agent, Move.STAY] and masks[agent].sum() == 1
            assert not np.any(obs[agent])
            continue
        near = any(abs(pos[0] - r) + abs(pos[1] - c) == 1 for r, c in prey)
        assert captures.all() == near and captures.any() == near, (agent, pos, prey)


def check_random_play_invariants():
    """Random play keeps positions distinct, masks closed and rewards bounded"""
    steps = 0
    for number, (preset, episodes) in enumerate(FUZZ_PRESETS.items()):
        config = create_preset_config(preset).env
        env = SyncPredatorPrey(config, 100 + number)
        rng = np.random.default_rng(200 + number)
        for _ in range(episodes):
            state, obs, masks = env.reset()
            _check_state(config, state, obs, masks)
            gone_predators, gone_prey = set(), set()
            total, done = 0.0, False
            while not done:
                joint = []
                for mask in masks:
                    options = np.flatnonzero(mask)
                    grabs = options[options >= CAPTURE_BASE]
                    pool = grabs if len(grabs) and rng.random() < 0.6 else options
                    joint.append(int(rng.choice(pool)))
                state, obs, masks, reward, done, info = env.step(joint)
                _check_state(config, state, obs, masks)
                expected = info["captures"] * config.capture_reward + info["miscaptures"] * config.miscapture_penalty
                assert reward == expected, (reward, info)
                if config.miscapture_penalty == 0.0:
                    assert reward >= 0.0 and reward % config.capture_reward == 0.0, reward
                assert all(state.predator_positions[i] is None for i in gone_predators)
                assert all(state.prey_positions[j] is None for j in gone_prey)
                gone_predators |= {i for i, p in enumerate(state.predator_positions) if p is None}
                gone_prey |= {j for j, p in enumerate(state.prey_positions) if p is None}
                total += reward
                steps += 1
            assert total <= config.max_episode_reward, (preset, total)
    return f"{steps:,} random steps"


def check_oversubscribed_capture():
    """Three capturers on one prey succeed and the highest-index one stays"""
    config = EnvConfig(grid_size=3, n_predators=4, n_prey=1, subteam_size=2, obs_window=3, max_steps=5)
    env = SyncPredatorPrey(config, 0)
    env.reset_to(GridState(predator_positions=((0, 1), (1, 0), (1, 2), (2, 2)), prey_positions=((1, 1),)))
    state, obs, masks, reward, done, info = env.step([capture(0), capture(0), capture(0), Move.STAY])
    assert (reward, info["captures"], info["miscaptures"]) == (10.0, 1, 0)
    assert state.predator_positions == (None, None, (1, 2), (2, 2))
    assert state.prey_positions == (None,) and state.captures_done == 1
    # A second sub-team has nothing left to catch; the episode runs to the time limit
    assert not done and not masks[2, CAPTURE_BASE] and not np.any(obs[0])
    steps = 1
    while not done:
        state, obs, masks, reward, done, info = env.step([Move.STAY] * 4)
        assert reward == 0.0
        steps += 1
    assert steps == config.max_steps and info["truncated"]


def check_penalty_per_prey():
    """Each prey with a failed capture attempt costs the penalty once"""
    config = EnvConfig(grid_size=4, n_predators=4, n_prey=2, subteam_size=2, obs_window=3)
    stay = Move.STAY

    # Two lone capturers next to two different prey
    state = GridState(predator_positions=((0, 0), (3, 3), (1, 3), (2, 0)), prey_positions=((0, 1), (3, 2)))
    _, reward, captures, miscaptures = resolve_predators(config, state, [capture(0), capture(0), stay, stay])
    assert (reward, captures, miscaptures) == (-4.0, 0, 2)

    # One capturer touching both prey
    state = GridState(predator_positions=((1, 1), (3, 3), (3, 0), (2, 3)), prey_positions=((0, 1), (1, 2)))
    _, reward, captures, miscaptures = resolve_predators(config, state, [capture(0), stay, stay, stay])
    assert (reward, captures, miscaptures) == (-4.0, 0, 2)

    # One success next to one failure
    state = GridState(predator_positions=((0, 0), (0, 2), (3, 3), (1, 3)), prey_positions=((0, 1), (3, 2)))
    after, reward, captures, miscaptures = resolve_predators(
        config, state, [capture(0), capture(0), capture(0), stay])
    assert (reward, captures, miscaptures) == (8.0, 1, 1)
    assert after.predator_positions == (None, None, (3, 3), (1, 3))
    assert after.prey_positions == (None, (3, 2))


def check_heterogeneous_surplus():
    """Duplicate capture indices beyond a covering set do not block a capture"""
    config = EnvConfig(grid_size=3, n_predators=4, n_prey=1, subteam_size=2,
                       capture_mode="heterogeneous", obs_window=3)
    state = GridState(predator_positions=((0, 1), (1, 0), (1, 2), (2, 1)), prey_positions=((1, 1),))
    after, reward, captures, _ = resolve_predators(config, state, [capture(0), capture(0), capture(1), capture(1)])
    assert (reward, captures) == (10.0, 1)
    # Lowest-index capturer per index is removed
    assert after.predator_positions == (None, (1, 0), None, (2, 1))

    after, reward, captures, _ = resolve_predators(config, state, [capture(1), capture(1), capture(0), Move.STAY])
    assert (reward, captures) == (10.0, 1)
    assert after.predator_positions == (None, (1, 0), None, (2, 1))

    _, reward, captures, miscaptures = resolve_predators(
        config, state, [capture(0), capture(0), capture(0), capture(0)])
    assert (reward, captures, miscaptures) == (-2.0, 0, 1)


def check_prey_enumeration():
    """Enumerated prey outcomes form a distribution that covers sampled moves"""
    state = GridState(predator_positions=((0, 0), (2, 2)), prey_positions=((1, 1),))
    outcomes = enumerate_prey_moves(TINY, state)
    assert abs(sum(p for p, _ in outcomes) - 1.0) < 1e-12
    assert len(outcomes) == 4 and all(abs(p - 0.25) < 1e-12 for p, _ in outcomes)
    env = SyncPredatorPrey(TINY, 11)
    env.reset_to(state)
    nxt, *_ = env.step([Move.STAY, Move.STAY])
    assert nxt in [s for _, s in outcomes]


def check_ascii_and_records():
    """ASCII frames parse back and trace records survive JSON"""
    text = render_ascii(CORNER_STATE, 10)
    parsed = parse_ascii(text, 8)
    assert parsed.predator_positions == CORNER_STATE.predator_positions
    assert sorted(parsed.prey_positions) == sorted(CORNER_STATE.prey_positions)
    record = step_record(CORNER_STATE, [0, 5, 0, 0, 0, 0, 0, 0], -2.0, {"captures": 0, "miscaptures": 1}, False)
    assert json.loads(json.dumps(record)) == record
    assert record["joint_action"][1] == "Capture0"


def check_config_validation():
    """Invalid configurations raise ConfigError"""
    bad = [
        dict(n_predators=7, subteam_size=2),
        dict(grid_size=3, obs_window=5),
        dict(obs_window=4),
        dict(miscapture_penalty=1.0),
        dict(subteam_size=1),
    ]
    for overrides in bad:
        try:
            EnvConfig(**overrides)
            raise AssertionError(f"accepted {overrides}")
        except ConfigError:
            pass
    # Fewer prey than sub-teams is a valid task
    assert EnvConfig(n_predators=4, n_prey=1, subteam_size=2).n_subteams == 2
    crowded = EnvConfig(grid_size=3, n_predators=6, n_prey=4, obs_window=3)
    try:
        SyncPredatorPrey(crowded, 0).reset()
        raise AssertionError("10 agents placed on 9 cells")
    except ConfigError:
        pass


if __name__ == "__main__":
    sys.exit(run_checks("GRID ENVIRONMENT VALIDATION", [
        check_action_encoding,
        check_reset_determinism,
        check_observation_window,
        check_masks,
        check_homogeneous_capture,
        check_miscapture,
        check_heterogeneous_capture,
        check_contract_violations,
        check_time_limit,
        check_max_episode_reward,
        check_seeded_trajectories,
        check_random_play_invariants,
        check_oversubscribed_capture,
        check_penalty_per_prey,
        check_heterogeneous_surplus,
        check_prey_enumeration,
        check_ascii_and_records,
        check_config_validation,
    ]))
