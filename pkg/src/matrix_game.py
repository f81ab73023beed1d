"""
One-shot synchronization game.

A single sub-team stands next to one prey for exactly one timestep. Every agent
picks a neutral action or a capture action; payoffs follow the grid's one-step
capture resolution (capture reward on success, miscapture penalty when too few
agents capture, 0 when nobody tries). The class mirrors SyncPredatorPrey's
reset/step interface so the learner trains on it unchanged.
"""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .config import EnvConfig
from .errors import ConfigError, ContractError
from .grid_env import capture_succeeds


@dataclass(frozen=True)
class MatrixState:
    step: int = 0
    done: bool = False


def payoff(config: EnvConfig, joint_action: Sequence[int]) -> Tuple[float, int, int]:
    """
    Shared reward of one joint action.

    Returns:
        Tuple of (reward, captures, miscaptures)
    """
    capturers = [
        (agent, a - config.n_neutral)
        for agent, a in enumerate(joint_action)
        if a >= config.n_neutral
    ]
    if not capturers:
        return 0.0, 0, 0
    if capture_succeeds(config, capturers) is not None:
        return float(config.capture_reward), 1, 0
    return float(config.miscapture_penalty), 0, 1


def payoff_table(config: EnvConfig) -> np.ndarray:
    """Payoff tensor with one axis per agent."""
    shape = (config.n_actions,) * config.n_predators
    table = np.zeros(shape)
    for joint in np.ndindex(*shape):
        table[joint] = payoff(config, joint)[0]
    return table


def game_action_name(config: EnvConfig, action: int) -> str:
    if action >= config.n_neutral:
        return f"Capture{action - config.n_neutral}"
    return f"Neutral{action}"


class OneShotGame:
    """The one-shot game behind the environment interface."""

    def __init__(self, config: EnvConfig, seed: int = 0):
        if config.task != "matrix":
            raise ConfigError(f"OneShotGame needs task 'matrix', got {config.task!r}")
        self.config = config
        self.seed = int(seed)
        self.state = None

    @property
    def n_agents(self) -> int:
        return self.config.n_predators

    @property
    def n_actions(self) -> int:
        return self.config.n_actions

    @property
    def obs_size(self) -> int:
        return self.config.obs_size

    def _obs(self) -> np.ndarray:
        return np.ones((self.n_agents, self.obs_size))

    def _masks(self) -> np.ndarray:
        return np.ones((self.n_agents, self.n_actions), dtype=bool)

    def reset(self):
        self.state = MatrixState()
        return self.state, self._obs(), self._masks()

    def step(self, joint_action: Sequence[int]):
        if self.state is None or self.state.done:
            raise ContractError("Episode is over; call reset()")
        joint_action = [int(a) for a in joint_action]
        if len(joint_action) != self.n_agents or not all(0 <= a < self.n_actions for a in joint_action):
            raise ContractError(f"Invalid joint action {joint_action}")
        reward, captures, miscaptures = payoff(self.config, joint_action)
        self.state = MatrixState(step=1, done=True)
        info = {"captures": captures, "miscaptures": miscaptures, "truncated": False}
        return self.state, self._obs(), self._masks(), reward, True, info
