"""
Exact oracle for Multi-agent Synchronization Tasks on tiny instances.

A task is lifted to an explicit fully observable model (TinyDecPomdp), solved for
Q* by value iteration, and each state's joint actions are split into all-neutral,
synchronization-positive and synchronization-negative sets. A task is an MST when
some state has both a positive and a negative set that are non-empty.
"""

from dataclasses import dataclass, field
from itertools import combinations, permutations, product
from math import comb, perm
from typing import Callable, Dict, FrozenSet, Hashable, List, Optional, Sequence, Tuple
import logging

import numpy as np

from .config import EnvConfig
from .errors import ContractError, NumericError, SizeError
from .grid_env import (
    CAPTURE_BASE,
    GridState,
    action_names,
    available_actions,
    enumerate_prey_moves,
    render_ascii,
    resolve_predators,
)
from .matrix_game import game_action_name, payoff

logger = logging.getLogger(__name__)

TERMINAL = "terminal"
DEFAULT_STATE_CAP = 2_000_000
TIE_EPSILON = 1e-9


@dataclass
class TinyDecPomdp:
    """
    Explicit model: states x joint actions with padded sparse transitions.

    next_states/next_probs have shape (S, A, K); unused slots carry probability 0.
    Illegal joint actions self-loop with reward 0 and are excluded from every max.
    """

    labels: List[Hashable]
    action_counts: Tuple[int, ...]
    joint_actions: List[Tuple[int, ...]]
    agent_masks: np.ndarray          # (S, n_agents, max_actions) bool
    legal: np.ndarray                # (S, A) bool
    rewards: np.ndarray              # (S, A)
    next_states: np.ndarray          # (S, A, K) int
    next_probs: np.ndarray           # (S, A, K)
    terminal: np.ndarray             # (S,) bool
    gamma: float
    horizon: Optional[int] = None
    start_distribution: Optional[np.ndarray] = None
    action_labels: Optional[List[str]] = None
    index: Dict[Hashable, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            self.index = {label: i for i, label in enumerate(self.labels)}
        self.validate()

    @property
    def n_states(self) -> int:
        return len(self.labels)

    @property
    def n_decision_states(self) -> int:
        """States where agents still act (the absorbing terminal excluded)."""
        return int(np.count_nonzero(~self.terminal))

    @property
    def n_agents(self) -> int:
        return len(self.action_counts)

    def validate(self):
        row_sums = self.next_probs.sum(axis=2)
        if np.max(np.abs(row_sums - 1.0)) > 1e-9:
            raise ContractError("Transition rows must sum to 1")
        if not (0.0 <= self.gamma < 1.0 or self.horizon is not None):
            raise ContractError("Need gamma < 1 or a finite horizon")

    def state_index(self, state) -> int:
        if isinstance(state, (int, np.integer)):
            return int(state)
        if isinstance(state, GridState):
            state = state.key()
        if state not in self.index:
            raise ContractError(f"Unknown state {state!r}")
        return self.index[state]


def build_model(
    labels: Sequence[Hashable],
    action_counts: Sequence[int],
    masks_fn: Callable[[Hashable], Sequence[np.ndarray]],
    dynamics_fn: Callable[[Hashable, Tuple[int, ...]], Tuple[float, List[Tuple[float, Hashable]]]],
    terminal_fn: Callable[[Hashable], bool],
    gamma: float,
    horizon: Optional[int] = None,
    start_distribution: Optional[np.ndarray] = None,
    action_labels: Optional[List[str]] = None,
) -> TinyDecPomdp:
    """
    Enumerate a model from callbacks.

    Args:
        labels: Hashable state labels
        action_counts: Number of actions per agent
        masks_fn: label -> one availability mask per agent
        dynamics_fn: (label, joint action) -> (reward, [(prob, next label), ...])
        terminal_fn: label -> whether the state is absorbing with value 0
        gamma: Discount factor
    """
    labels = list(labels)
    index = {label: i for i, label in enumerate(labels)}
    action_counts = tuple(int(c) for c in action_counts)
    joint_actions = list(product(*(range(c) for c in action_counts)))
    n_states, n_joint = len(labels), len(joint_actions)
    max_actions = max(action_counts)

    agent_masks = np.zeros((n_states, len(action_counts), max_actions), dtype=bool)
    legal = np.zeros((n_states, n_joint), dtype=bool)
    rewards = np.zeros((n_states, n_joint))
    terminal = np.zeros(n_states, dtype=bool)
    rows: List[List[List[Tuple[int, float]]]] = []
    branching = 1

    for s, label in enumerate(labels):
        state_rows = []
        terminal[s] = terminal_fn(label)
        if not terminal[s]:
            for agent, mask in enumerate(masks_fn(label)):
                agent_masks[s, agent, : len(mask)] = mask
        for a, joint in enumerate(joint_actions):
            if terminal[s] or not all(agent_masks[s, i, ai] for i, ai in enumerate(joint)):
                state_rows.append([(s, 1.0)])
                continue
            legal[s, a] = True
            reward, outcomes = dynamics_fn(label, joint)
            rewards[s, a] = reward
            row = [(index[nxt], prob) for prob, nxt in outcomes]
            branching = max(branching, len(row))
            state_rows.append(row)
        rows.append(state_rows)

    next_states = np.zeros((n_states, n_joint, branching), dtype=np.int64)
    next_probs = np.zeros((n_states, n_joint, branching))
    for s, state_rows in enumerate(rows):
        for a, row in enumerate(state_rows):
            for k, (nxt, prob) in enumerate(row):
                next_states[s, a, k] = nxt
                next_probs[s, a, k] = prob

    return TinyDecPomdp(
        labels=labels,
        action_counts=action_counts,
        joint_actions=joint_actions,
        agent_masks=agent_masks,
        legal=legal,
        rewards=rewards,
        next_states=next_states,
        next_probs=next_probs,
        terminal=terminal,
        gamma=gamma,
        horizon=horizon,
        start_distribution=start_distribution,
        action_labels=action_labels,
        index=index,
    )


def count_grid_states(config: EnvConfig) -> int:
    """Non-terminal lifted states plus the single absorbing terminal state."""
    cells = config.grid_size ** 2
    total = 1
    for c in range(min(config.n_subteams, config.n_prey + 1)):
        removed = c * config.subteam_size
        live = (config.n_predators - removed) + (config.n_prey - c)
        if live > cells:
            continue
        total += comb(config.n_predators, removed) * comb(config.n_prey, c) * perm(cells, live)
    return total


def _grid_labels(config: EnvConfig) -> List[tuple]:
    cells = [(r, c) for r in range(config.grid_size) for c in range(config.grid_size)]
    labels = []
    for captured_count in range(config.n_subteams):
        for removed in combinations(range(config.n_predators), captured_count * config.subteam_size):
            for captured in combinations(range(config.n_prey), captured_count):
                live_pred = [i for i in range(config.n_predators) if i not in removed]
                live_prey = [j for j in range(config.n_prey) if j not in captured]
                for placement in permutations(cells, len(live_pred) + len(live_prey)):
                    predators = [None] * config.n_predators
                    prey = [None] * config.n_prey
                    for i, cell in zip(live_pred, placement):
                        predators[i] = cell
                    for j, cell in zip(live_prey, placement[len(live_pred):]):
                        prey[j] = cell
                    labels.append((tuple(predators), tuple(prey), captured_count))
    labels.append(TERMINAL)
    return labels


def lift_env(config: EnvConfig, gamma: float = 0.99, state_cap: int = DEFAULT_STATE_CAP) -> TinyDecPomdp:
    """
    Enumerate a tiny task into an explicit model with grid-env dynamics.

    The step counter is not part of the lifted state: the model is stationary and
    every terminal grid state collapses into one absorbing state. Prey randomness
    becomes explicit transition probabilities.
    """
    if config.task == "matrix":
        return matrix_game_model(config, gamma)

    n_states = count_grid_states(config)
    if n_states > state_cap:
        raise SizeError(
            f"Task has {n_states:,} lifted states, above the cap of {state_cap:,}; "
            f"use a tiny preset (tiny, tiny-nopenalty, tiny-hetero)"
        )
    if config.n_predators + config.n_prey > config.grid_size ** 2:
        raise SizeError("Grid cannot host all agents")

    logger.info(f"Lifting {config.grid_size}x{config.grid_size} task: {n_states:,} states, "
                f"{config.n_actions ** config.n_predators} joint actions")

    def to_state(label) -> GridState:
        return GridState(predator_positions=label[0], prey_positions=label[1], captures_done=label[2])

    def masks_fn(label):
        state = to_state(label)
        return [available_actions(config, state, i) for i in range(config.n_predators)]

    def dynamics_fn(label, joint):
        intermediate, reward, _, _ = resolve_predators(config, to_state(label), joint)
        if intermediate.captures_done >= config.n_subteams:
            return reward, [(1.0, TERMINAL)]
        return reward, [(prob, nxt.key()) for prob, nxt in enumerate_prey_moves(config, intermediate)]

    labels = _grid_labels(config)
    start = np.array([1.0 if label != TERMINAL and label[2] == 0 else 0.0 for label in labels])
    start /= start.sum()

    model = build_model(
        labels,
        [config.n_actions] * config.n_predators,
        masks_fn,
        dynamics_fn,
        lambda label: label == TERMINAL,
        gamma,
        start_distribution=start,
        action_labels=action_names(config.n_actions),
    )
    logger.info(f"Lifted model: {model.n_states:,} states, branching {model.next_states.shape[2]}")
    return model


def matrix_game_model(config: EnvConfig, gamma: float = 0.99) -> TinyDecPomdp:
    """One decision state followed by the terminal state."""
    n_agents, n_actions = config.n_predators, config.n_actions

    def dynamics_fn(label, joint):
        return payoff(config, joint)[0], [(1.0, TERMINAL)]

    return build_model(
        ["decision", TERMINAL],
        [n_actions] * n_agents,
        lambda label: [np.ones(n_actions, dtype=bool)] * n_agents,
        dynamics_fn,
        lambda label: label == TERMINAL,
        gamma,
        start_distribution=np.array([1.0, 0.0]),
        action_labels=[game_action_name(config, a) for a in range(n_actions)],
    )


def one_shot_model(payoffs: np.ndarray, gamma: float = 0.99, action_labels=None) -> TinyDecPomdp:
    """One-shot game from an explicit payoff tensor (one axis per agent)."""
    payoffs = np.asarray(payoffs, dtype=float)
    counts = payoffs.shape
    return build_model(
        ["decision", TERMINAL],
        counts,
        lambda label: [np.ones(c, dtype=bool) for c in counts],
        lambda label, joint: (float(payoffs[joint]), [(1.0, TERMINAL)]),
        lambda label: label == TERMINAL,
        gamma,
        start_distribution=np.array([1.0, 0.0]),
        action_labels=action_labels,
    )


@dataclass
class QTable:
    """Q* over state x joint action, tied to its model."""

    model: TinyDecPomdp
    values: np.ndarray
    iterations: int
    residual: float

    def state_values(self) -> np.ndarray:
        return _greedy_values(self.model, self.values)


def _greedy_values(model: TinyDecPomdp, q: np.ndarray) -> np.ndarray:
    masked = np.where(model.legal, q, -np.inf)
    v = masked.max(axis=1)
    v[model.terminal] = 0.0
    return v


def _backup(model: TinyDecPomdp, v: np.ndarray, gamma: float) -> np.ndarray:
    q = model.rewards + gamma * np.sum(model.next_probs * v[model.next_states], axis=2)
    q[model.terminal] = 0.0
    return q


def exact_q(model: TinyDecPomdp, tol: float = 1e-12, max_iterations: int = 1_000_000) -> QTable:
    """
    Q* by value iteration from zero.

    With a finite horizon, exactly `horizon` backups are applied (Q at t = 0);
    otherwise iteration stops once the sup-norm residual drops below tol.
    """
    q = np.zeros_like(model.rewards)
    if model.horizon is not None:
        for _ in range(model.horizon):
            q = _backup(model, _greedy_values(model, q), model.gamma)
        return QTable(model=model, values=q, iterations=model.horizon, residual=0.0)

    for iteration in range(1, max_iterations + 1):
        q_new = _backup(model, _greedy_values(model, q), model.gamma)
        residual = float(np.max(np.abs(q_new - q))) if q.size else 0.0
        q = q_new
        if residual < tol:
            logger.debug(f"Value iteration converged after {iteration} iterations (residual {residual:.3g})")
            return QTable(model=model, values=q, iterations=iteration, residual=residual)
    raise NumericError(f"Value iteration did not converge within {max_iterations} iterations")


@dataclass(frozen=True)
class Partitioning:
    """Per-agent synchronization action sets; the complements are neutral."""

    sync: Tuple[FrozenSet[int], ...]

    def check(self, action_counts: Sequence[int]):
        if len(self.sync) != len(action_counts):
            raise ContractError(
                f"Partitioning covers {len(self.sync)} agents, model has {len(action_counts)}"
            )
        for agent, (sync, count) in enumerate(zip(self.sync, action_counts)):
            if any(not 0 <= a < count for a in sync):
                raise ContractError(f"Agent {agent}: sync actions {sorted(sync)} outside 0..{count - 1}")

    def neutral(self, agent: int, count: int) -> FrozenSet[int]:
        return frozenset(range(count)) - self.sync[agent]

    def n_sync(self, joint: Sequence[int]) -> int:
        return sum(1 for agent, a in enumerate(joint) if a in self.sync[agent])


def grid_partitioning(config: EnvConfig) -> Partitioning:
    """Capture actions are the synchronization actions."""
    first = config.n_neutral if config.task == "matrix" else CAPTURE_BASE
    sync = frozenset(range(first, config.n_actions))
    return Partitioning(sync=tuple(sync for _ in range(config.n_predators)))


@dataclass
class Classification:
    state: int
    a_neut: List[Tuple[int, ...]]
    a_plus: List[Tuple[int, ...]]
    a_minus: List[Tuple[int, ...]]


def classify(q: QTable, state, partitioning: Partitioning, epsilon: float = TIE_EPSILON) -> Classification:
    """
    Split a state's legal joint actions.

    A_plus: >= 2 sync components and Q strictly above every all-neutral joint
    action; A_minus: >= 1 sync component and Q strictly below every all-neutral
    joint action. Ties within epsilon belong to neither set. Without a legal
    all-neutral joint action both sets are empty.
    """
    model = q.model
    partitioning.check(model.action_counts)
    s = model.state_index(state)
    legal = [a for a in range(len(model.joint_actions)) if model.legal[s, a]]
    n_sync = {a: partitioning.n_sync(model.joint_actions[a]) for a in legal}

    neut = [a for a in legal if n_sync[a] == 0]
    plus: List[int] = []
    minus: List[int] = []
    if neut:
        q_row = q.values[s]
        best_neut = max(q_row[a] for a in neut)
        worst_neut = min(q_row[a] for a in neut)
        plus = [a for a in legal if n_sync[a] >= 2 and q_row[a] > best_neut + epsilon]
        minus = [a for a in legal if n_sync[a] >= 1 and q_row[a] < worst_neut - epsilon]

    joints = model.joint_actions
    return Classification(
        state=s,
        a_neut=[joints[a] for a in neut],
        a_plus=[joints[a] for a in plus],
        a_minus=[joints[a] for a in minus],
    )


@dataclass
class MstVerdict:
    is_mst: bool
    witnesses: List[int]
    q: QTable
    classifications: Dict[int, Classification]


def is_mst(model: TinyDecPomdp, partitioning: Partitioning, tol: float = 1e-12) -> MstVerdict:
    """True iff some non-terminal state has non-empty A_plus and A_minus."""
    partitioning.check(model.action_counts)
    q = exact_q(model, tol=tol)
    witnesses = []
    found = {}
    for s in range(model.n_states):
        if model.terminal[s]:
            continue
        result = classify(q, s, partitioning)
        if result.a_plus and result.a_minus:
            witnesses.append(s)
            found[s] = result
    logger.info(f"MST check: {len(witnesses)} witness states out of {model.n_states}")
    return MstVerdict(is_mst=bool(witnesses), witnesses=witnesses, q=q, classifications=found)


def policy_return(
    model: TinyDecPomdp,
    policy: np.ndarray,
    horizon: int,
    gamma: float = 1.0,
    start_distribution: Optional[np.ndarray] = None,
) -> float:
    """
    Expected return of a stationary joint policy over a finite horizon.

    Args:
        policy: (S, A) joint-action probabilities; rows of non-terminal states sum to 1
    """
    start = model.start_distribution if start_distribution is None else start_distribution
    if start is None:
        raise ContractError("Model has no start distribution")
    v = np.zeros(model.n_states)
    for _ in range(horizon):
        q = _backup(model, v, gamma)
        v = np.sum(policy * q, axis=1)
        v[model.terminal] = 0.0
    return float(start @ v)


def product_policy(model: TinyDecPomdp, weights: Sequence[np.ndarray]) -> np.ndarray:
    """
    Joint policy where each agent independently samples an available action with
    probability proportional to its fixed weights.
    """
    per_agent = []
    for agent, w in enumerate(weights):
        masked = model.agent_masks[:, agent, : len(w)] * np.asarray(w)[None, :]
        totals = masked.sum(axis=1, keepdims=True)
        per_agent.append(np.divide(masked, totals, out=np.zeros_like(masked), where=totals > 0))
    policy = np.ones((model.n_states, len(model.joint_actions)))
    for a, joint in enumerate(model.joint_actions):
        for agent, ai in enumerate(joint):
            policy[:, a] *= per_agent[agent][:, ai]
    policy[model.terminal] = 0.0
    return policy


def describe_state(model: TinyDecPomdp, s: int, grid_size: Optional[int] = None) -> str:
    label = model.labels[s]
    if grid_size is not None and isinstance(label, tuple) and len(label) == 3:
        state = GridState(predator_positions=label[0], prey_positions=label[1], captures_done=label[2])
        return render_ascii(state, grid_size)
    return str(label)
