"""
Synchronized Predator-Prey gridworld.

Predators move on a square grid and must capture prey in sub-teams: a capture
only succeeds when enough adjacent predators choose a capture action in the same
timestep. Too few capturers earn the shared team a miscapture penalty.

The transition logic is pure functions over GridState; the exact oracle
(mst_oracle.lift_env) enumerates the same dynamics the environment samples.
"""

from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from .config import EnvConfig, N_MOVE_ACTIONS
from .errors import ConfigError, ContractError

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]


class Move(IntEnum):
    """Neutral actions. Capture(k) is encoded as CAPTURE_BASE + k."""

    STAY = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4


CAPTURE_BASE = N_MOVE_ACTIONS

DELTAS = {
    Move.STAY: (0, 0),
    Move.UP: (-1, 0),
    Move.DOWN: (1, 0),
    Move.LEFT: (0, -1),
    Move.RIGHT: (0, 1),
}

# Order in which neighbors are listed for adjacency checks and prey moves
NEIGHBOR_ORDER = (Move.UP, Move.DOWN, Move.LEFT, Move.RIGHT)


def capture(k: int) -> int:
    """Action index of Capture(k)."""
    return CAPTURE_BASE + k


def is_capture(action: int) -> bool:
    return action >= CAPTURE_BASE


def action_name(action: int) -> str:
    if is_capture(action):
        return f"Capture{action - CAPTURE_BASE}"
    return Move(action).name.capitalize()


def action_names(n_actions: int) -> List[str]:
    return [action_name(a) for a in range(n_actions)]


@dataclass(frozen=True)
class GridState:
    """Full environment state. Removed predators and captured prey are None."""

    predator_positions: Tuple[Optional[Cell], ...]
    prey_positions: Tuple[Optional[Cell], ...]
    step: int = 0
    captures_done: int = 0

    def key(self) -> tuple:
        """State identity without the step counter (used by the oracle)."""
        return (self.predator_positions, self.prey_positions, self.captures_done)

    def occupied(self) -> set:
        cells = {p for p in self.predator_positions if p is not None}
        cells.update(p for p in self.prey_positions if p is not None)
        return cells

    def to_record(self) -> Dict[str, list]:
        return {
            "predators": [list(p) if p is not None else None for p in self.predator_positions],
            "prey": [list(p) if p is not None else None for p in self.prey_positions],
        }


def is_terminal(config: EnvConfig, state: GridState) -> bool:
    return state.captures_done >= config.n_subteams or state.step >= config.max_steps


def _in_bounds(config: EnvConfig, cell: Cell) -> bool:
    return 0 <= cell[0] < config.grid_size and 0 <= cell[1] < config.grid_size


def _shift(cell: Cell, move: Move) -> Cell:
    dr, dc = DELTAS[move]
    return (cell[0] + dr, cell[1] + dc)


def _adjacent(a: Cell, b: Cell) -> bool:
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def available_actions(config: EnvConfig, state: GridState, agent: int) -> np.ndarray:
    """
    Availability mask for one predator.

    Movement into occupied cells or off the grid is masked, every Capture(k)
    is masked unless a live prey is 4-adjacent, and a removed predator may
    only Stay.
    """
    if not 0 <= agent < config.n_predators:
        raise ContractError(f"Agent index {agent} out of range")
    mask = np.zeros(config.n_actions, dtype=bool)
    mask[Move.STAY] = True
    pos = state.predator_positions[agent]
    if pos is None:
        return mask

    occupied = state.occupied()
    for move in NEIGHBOR_ORDER:
        target = _shift(pos, move)
        mask[move] = _in_bounds(config, target) and target not in occupied

    if any(p is not None and _adjacent(pos, p) for p in state.prey_positions):
        mask[CAPTURE_BASE:] = True
    return mask


def availability(config: EnvConfig, state: GridState) -> np.ndarray:
    """Masks for all predators, shape (n_predators, n_actions)."""
    return np.stack([available_actions(config, state, i) for i in range(config.n_predators)])


def _check_joint_action(config: EnvConfig, state: GridState, joint_action: Sequence[int]):
    if len(joint_action) != config.n_predators:
        raise ContractError(
            f"Expected {config.n_predators} actions, got {len(joint_action)}"
        )
    for agent, action in enumerate(joint_action):
        if not 0 <= action < config.n_actions:
            raise ContractError(f"Agent {agent}: action {action} out of range")
        if not available_actions(config, state, agent)[action]:
            raise ContractError(
                f"Agent {agent}: action {action_name(action)} is unavailable"
            )


def capture_succeeds(config: EnvConfig, capturers: List[Tuple[int, int]]) -> Optional[List[int]]:
    """
    Decide one prey's capture given (agent, capture index) pairs sorted by agent.

    Returns the agents removed by a successful capture, or None.
    """
    if config.capture_mode == "homogeneous":
        if len(capturers) >= config.subteam_size:
            return [agent for agent, _ in capturers[: config.subteam_size]]
        return None

    # Heterogeneous: lowest-index capturer for each required capture index
    chosen = {}
    for agent, k in capturers:
        chosen.setdefault(k, agent)
    if len(chosen) == config.subteam_size:
        return sorted(chosen.values())
    return None


def resolve_predators(
    config: EnvConfig, state: GridState, joint_action: Sequence[int]
) -> Tuple[GridState, float, int, int]:
    """
    Apply captures and predator moves for one timestep (prey not yet moved).

    Captures are resolved on start-of-step positions in ascending prey order; a
    predator removed by one capture cannot count for a later prey. Moves are
    applied in ascending agent order and a move into a cell taken earlier in the
    step degrades to Stay.

    Returns:
        Tuple of (intermediate state, reward, captures, miscaptures)
    """
    _check_joint_action(config, state, joint_action)

    predators = list(state.predator_positions)
    prey = list(state.prey_positions)
    reward = 0.0
    captures = 0
    miscaptures = 0
    consumed = set()

    for prey_id, prey_pos in enumerate(state.prey_positions):
        if prey_pos is None:
            continue
        capturers = [
            (agent, joint_action[agent] - CAPTURE_BASE)
            for agent, pos in enumerate(state.predator_positions)
            if pos is not None
            and agent not in consumed
            and is_capture(joint_action[agent])
            and _adjacent(pos, prey_pos)
        ]
        if not capturers:
            continue
        removed = capture_succeeds(config, capturers)
        if removed is None:
            reward += config.miscapture_penalty
            miscaptures += 1
            continue
        reward += config.capture_reward
        captures += 1
        prey[prey_id] = None
        for agent in removed:
            predators[agent] = None
            consumed.add(agent)

    occupied = {p for p in predators if p is not None}
    occupied.update(p for p in prey if p is not None)
    for agent, pos in enumerate(predators):
        action = joint_action[agent]
        if pos is None or is_capture(action) or action == Move.STAY:
            continue
        target = _shift(pos, Move(action))
        if target in occupied:
            continue
        occupied.discard(pos)
        occupied.add(target)
        predators[agent] = target

    intermediate = GridState(
        predator_positions=tuple(predators),
        prey_positions=tuple(prey),
        step=state.step,
        captures_done=state.captures_done + captures,
    )
    return intermediate, reward, captures, miscaptures


def _prey_options(config: EnvConfig, occupied: set, pos: Cell) -> List[Cell]:
    options = []
    for move in NEIGHBOR_ORDER:
        target = _shift(pos, move)
        if _in_bounds(config, target) and target not in occupied:
            options.append(target)
    return options


def sample_prey_moves(config: EnvConfig, state: GridState, rng: np.random.Generator) -> GridState:
    """Move each live prey (ascending index) to a uniformly chosen open neighbor."""
    prey = list(state.prey_positions)
    occupied = state.occupied()
    for prey_id, pos in enumerate(prey):
        if pos is None:
            continue
        options = _prey_options(config, occupied, pos)
        if not options:
            continue
        target = options[int(rng.integers(len(options)))]
        occupied.discard(pos)
        occupied.add(target)
        prey[prey_id] = target
    return replace(state, prey_positions=tuple(prey), step=state.step + 1)


def enumerate_prey_moves(config: EnvConfig, state: GridState) -> List[Tuple[float, GridState]]:
    """All outcomes of sample_prey_moves with their probabilities."""
    outcomes = [(1.0, list(state.prey_positions), state.occupied())]
    for prey_id, pos in enumerate(state.prey_positions):
        if pos is None:
            continue
        expanded = []
        for prob, prey, occupied in outcomes:
            options = _prey_options(config, occupied, pos)
            if not options:
                expanded.append((prob, prey, occupied))
                continue
            for target in options:
                moved = list(prey)
                moved[prey_id] = target
                cells = set(occupied)
                cells.discard(pos)
                cells.add(target)
                expanded.append((prob / len(options), moved, cells))
        outcomes = expanded

    merged: Dict[tuple, float] = {}
    for prob, prey, _ in outcomes:
        key = tuple(prey)
        merged[key] = merged.get(key, 0.0) + prob
    return [
        (prob, replace(state, prey_positions=prey, step=state.step + 1))
        for prey, prob in merged.items()
    ]


def observe(config: EnvConfig, state: GridState, agent: int) -> np.ndarray:
    """
    Observation of one predator.

    Channel 1 holds (id + 1) / n_predators for other predators in the window,
    channel 2 holds 1 for prey; off-grid cells are -1 in both channels. The
    predator's own (row, col) scaled to [0, 1] is appended. Removed predators
    observe all zeros.
    """
    if not 0 <= agent < config.n_predators:
        raise ContractError(f"Agent index {agent} out of range")
    w = config.obs_window
    obs = np.zeros(config.obs_size, dtype=np.float64)
    pos = state.predator_positions[agent]
    if pos is None:
        return obs

    predator_at = {p: i for i, p in enumerate(state.predator_positions) if p is not None and i != agent}
    prey_at = {p for p in state.prey_positions if p is not None}
    half = w // 2
    channel1 = obs[: w * w]
    channel2 = obs[w * w: 2 * w * w]
    for idx in range(w * w):
        cell = (pos[0] + idx // w - half, pos[1] + idx % w - half)
        if not _in_bounds(config, cell):
            channel1[idx] = -1.0
            channel2[idx] = -1.0
            continue
        if cell in predator_at:
            channel1[idx] = (predator_at[cell] + 1) / config.n_predators
        if cell in prey_at:
            channel2[idx] = 1.0

    scale = max(1, config.grid_size - 1)
    obs[-2] = pos[0] / scale
    obs[-1] = pos[1] / scale
    return obs


def observations(config: EnvConfig, state: GridState) -> np.ndarray:
    """Observations for all predators, shape (n_predators, obs_size)."""
    return np.stack([observe(config, state, i) for i in range(config.n_predators)])


def _predator_char(agent: int) -> str:
    return str(agent) if agent < 10 else chr(ord("A") + agent - 10)


def render_ascii(state: GridState, grid_size: int) -> str:
    """One character per cell: predator id, 'p' for prey, '.' for empty."""
    rows = [["."] * grid_size for _ in range(grid_size)]
    for pos in state.prey_positions:
        if pos is not None:
            rows[pos[0]][pos[1]] = "p"
    for agent, pos in enumerate(state.predator_positions):
        if pos is not None:
            rows[pos[0]][pos[1]] = _predator_char(agent)
    return "\n".join("".join(row) for row in rows)


def parse_ascii(text: str, n_predators: int) -> GridState:
    """
    Inverse of render_ascii. Prey come back in row-major order; predators not
    found on the board are treated as removed.
    """
    predators: List[Optional[Cell]] = [None] * n_predators
    prey: List[Cell] = []
    for r, line in enumerate(text.splitlines()):
        for c, ch in enumerate(line):
            if ch == ".":
                continue
            if ch == "p":
                prey.append((r, c))
                continue
            agent = int(ch) if ch.isdigit() else ord(ch) - ord("A") + 10
            if not 0 <= agent < n_predators:
                raise ContractError(f"Unknown predator symbol {ch!r} at ({r}, {c})")
            predators[agent] = (r, c)
    return GridState(predator_positions=tuple(predators), prey_positions=tuple(prey))


class SyncPredatorPrey:
    """
    Seeded Synchronized Predator-Prey environment.

    Each instance owns one PCG64 stream; instances share no mutable state.
    """

    def __init__(self, config: EnvConfig, seed: int):
        if config.task != "grid":
            raise ConfigError(f"SyncPredatorPrey needs task 'grid', got {config.task!r}")
        self.config = config
        self.seed = int(seed)
        self.rng = np.random.Generator(np.random.PCG64(self.seed))
        self.state: Optional[GridState] = None

    @property
    def n_agents(self) -> int:
        return self.config.n_predators

    @property
    def n_actions(self) -> int:
        return self.config.n_actions

    @property
    def obs_size(self) -> int:
        return self.config.obs_size

    def reset(self) -> Tuple[GridState, np.ndarray, np.ndarray]:
        """Place all agents on distinct uniformly random cells."""
        n_cells = self.config.grid_size ** 2
        n_agents = self.config.n_predators + self.config.n_prey
        if n_agents > n_cells:
            raise ConfigError(
                f"A {self.config.grid_size}x{self.config.grid_size} grid cannot host {n_agents} agents"
            )
        cells = self.rng.choice(n_cells, size=n_agents, replace=False)
        positions = [(int(c) // self.config.grid_size, int(c) % self.config.grid_size) for c in cells]
        state = GridState(
            predator_positions=tuple(positions[: self.config.n_predators]),
            prey_positions=tuple(positions[self.config.n_predators:]),
        )
        return self.reset_to(state)

    def reset_to(self, state: GridState) -> Tuple[GridState, np.ndarray, np.ndarray]:
        """Start an episode from a handcrafted state."""
        cells = [p for p in state.predator_positions + state.prey_positions if p is not None]
        if len(state.predator_positions) != self.config.n_predators or len(state.prey_positions) != self.config.n_prey:
            raise ContractError("State does not match the configured agent counts")
        if len(set(cells)) != len(cells) or not all(_in_bounds(self.config, c) for c in cells):
            raise ContractError("Agents must occupy distinct in-bounds cells")
        self.state = state
        return state, observations(self.config, state), availability(self.config, state)

    def available_actions(self, agent: int) -> np.ndarray:
        return available_actions(self.config, self._current(), agent)

    def observe(self, agent: int) -> np.ndarray:
        return observe(self.config, self._current(), agent)

    def step(self, joint_action: Sequence[int]):
        """
        Advance one timestep.

        Returns:
            Tuple of (state, observations, masks, reward, done, info)
        """
        state = self._current()
        if is_terminal(self.config, state):
            raise ContractError("Episode is over; call reset()")
        joint_action = [int(a) for a in joint_action]
        intermediate, reward, captures, miscaptures = resolve_predators(self.config, state, joint_action)
        self.state = sample_prey_moves(self.config, intermediate, self.rng)
        done = is_terminal(self.config, self.state)
        info = {
            "captures": captures,
            "miscaptures": miscaptures,
            # Time limit hit with prey left
            "truncated": done and self.state.captures_done < self.config.n_subteams,
        }
        return (
            self.state,
            observations(self.config, self.state),
            availability(self.config, self.state),
            reward,
            done,
            info,
        )

    def render_ascii(self) -> str:
        return render_ascii(self._current(), self.config.grid_size)

    def _current(self) -> GridState:
        if self.state is None:
            raise ContractError("Environment has not been reset")
        return self.state


def env_new(config: EnvConfig, seed: int) -> SyncPredatorPrey:
    """Create an environment with its own PCG64 stream derived from seed."""
    return SyncPredatorPrey(config, seed)


def step_record(
    state: GridState, joint_action: Sequence[int], reward: float, info: Dict[str, int], done: bool
) -> dict:
    """One line of an episode trace."""
    return {
        "step": state.step,
        "positions": state.to_record(),
        "joint_action": [action_name(int(a)) for a in joint_action],
        "reward": float(reward),
        "captures": int(info.get("captures", 0)),
        "miscaptures": int(info.get("miscaptures", 0)),
        "done": bool(done),
    }
