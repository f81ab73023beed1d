"""
Configuration parameters for Synchronized Predator-Prey experiments.
"""

from dataclasses import dataclass, field, asdict
from typing import List, Optional, Tuple
import hashlib
import json

from .errors import ConfigError


CAPTURE_MODES = ("homogeneous", "heterogeneous")
TASKS = ("grid", "matrix")
TOPOLOGY_KINDS = ("full", "empty", "line", "cycle")

# Stay, Up, Down, Left, Right
N_MOVE_ACTIONS = 5


def _require(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


@dataclass
class EnvConfig:
    """Configuration for the Synchronized Predator-Prey task."""

    grid_size: int = 10
    n_predators: int = 8
    n_prey: int = 8

    # Predators required per capture
    subteam_size: int = 2
    capture_mode: str = "homogeneous"

    capture_reward: float = 10.0
    miscapture_penalty: float = -2.0
    max_steps: int = 200

    # Side of the square observation window centered on the predator
    obs_window: int = 5

    # "grid" is the gridworld; "matrix" is the one-shot synchronization game
    task: str = "grid"
    # Neutral actions per agent in the one-shot game (grid uses its 5 moves)
    n_neutral: int = N_MOVE_ACTIONS

    def __post_init__(self):
        """Validate configuration."""
        _require(self.task in TASKS, f"Unknown task: {self.task}")
        _require(self.capture_mode in CAPTURE_MODES, f"Unknown capture mode: {self.capture_mode}")
        _require(self.grid_size > 0, "Grid size must be positive")
        _require(self.n_predators > 0, "Must have at least one predator")
        _require(self.n_prey > 0, "Must have at least one prey")
        _require(self.subteam_size >= 2, "Sub-team size must be at least 2")
        _require(
            self.n_predators % self.subteam_size == 0,
            f"{self.n_predators} predators cannot be split into sub-teams of {self.subteam_size}",
        )
        _require(self.miscapture_penalty <= 0, "Miscapture penalty must be <= 0")
        _require(self.max_steps > 0, "max_steps must be positive")
        _require(
            self.obs_window > 0 and self.obs_window % 2 == 1,
            f"Observation window must be odd and positive, got {self.obs_window}",
        )
        _require(
            self.obs_window <= self.grid_size,
            f"Observation window {self.obs_window} is larger than the {self.grid_size}x{self.grid_size} grid",
        )
        _require(self.n_neutral >= 1, "Need at least one neutral action")
        if self.task == "matrix":
            _require(
                self.n_predators == self.subteam_size,
                "The one-shot game has exactly one sub-team of agents",
            )

    @property
    def n_subteams(self) -> int:
        return self.n_predators // self.subteam_size

    @property
    def n_capture_actions(self) -> int:
        return self.subteam_size if self.capture_mode == "heterogeneous" else 1

    @property
    def n_actions(self) -> int:
        """Per-agent action count (neutral actions first, then captures)."""
        neutral = self.n_neutral if self.task == "matrix" else N_MOVE_ACTIONS
        return neutral + self.n_capture_actions

    @property
    def max_episode_reward(self) -> float:
        return self.n_subteams * self.capture_reward

    @property
    def obs_size(self) -> int:
        if self.task == "matrix":
            return 1
        return self.obs_window * self.obs_window * 2 + 2


@dataclass
class LearnerConfig:
    """Configuration for the coordination-graph Q-learner."""

    gamma: float = 0.99
    learning_rate: float = 5e-4

    # Linear epsilon schedule; decay_steps None means 30% of max_env_steps
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: Optional[int] = None

    replay_capacity: int = 50_000
    batch_size: int = 32
    target_sync_period: int = 2000
    train_start: int = 1000
    train_every: int = 1
    max_env_steps: int = 100_000

    hidden_sizes: Tuple[int, ...] = (64, 64)
    init_scale: float = 1.0

    max_plus_iterations: int = 8
    # None picks 0.0 on trees and 0.5 on cyclic graphs
    max_plus_damping: Optional[float] = None
    # Bootstrap with exhaustive max when there are at most this many agents
    exhaustive_max_agents: int = 4

    # Progress logging every N episodes (0 disables)
    log_interval: int = 100

    def __post_init__(self):
        """Validate configuration."""
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        _require(0.0 <= self.gamma < 1.0, "gamma must be in [0, 1)")
        _require(self.learning_rate > 0, "Learning rate must be positive")
        _require(0.0 <= self.epsilon_start <= 1.0, "epsilon_start must be in [0, 1]")
        _require(0.0 <= self.epsilon_end <= 1.0, "epsilon_end must be in [0, 1]")
        _require(
            self.epsilon_decay_steps is None or self.epsilon_decay_steps > 0,
            "epsilon_decay_steps must be positive",
        )
        _require(self.replay_capacity > 0, "Replay capacity must be positive")
        _require(self.batch_size > 0, "Batch size must be positive")
        _require(self.batch_size <= self.replay_capacity, "Batch size exceeds replay capacity")
        _require(self.target_sync_period > 0, "Target sync period must be positive")
        _require(self.train_start >= self.batch_size, "train_start must be >= batch_size")
        _require(self.train_every > 0, "train_every must be positive")
        _require(self.max_env_steps > 0, "max_env_steps must be positive")
        _require(all(h > 0 for h in self.hidden_sizes), "Hidden sizes must be positive")
        _require(self.max_plus_iterations >= 1, "Max-Plus needs at least one iteration")
        _require(
            self.max_plus_damping is None or 0.0 <= self.max_plus_damping < 1.0,
            "Max-Plus damping must be in [0, 1)",
        )

    @property
    def decay_steps(self) -> int:
        if self.epsilon_decay_steps is not None:
            return self.epsilon_decay_steps
        return max(1, int(0.3 * self.max_env_steps))

    def epsilon_at(self, env_step: int) -> float:
        """Linear schedule from epsilon_start to epsilon_end."""
        frac = min(1.0, env_step / self.decay_steps)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)


@dataclass
class ExperimentConfig:
    """Overall experiment configuration."""

    name: str = "experiment"
    env: EnvConfig = field(default_factory=EnvConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    topology: str = "full"
    seeds: List[int] = field(default_factory=lambda: list(range(10)))

    # Greedy evaluation every N env steps on a freshly seeded env
    eval_every: int = 5000
    eval_episodes: int = 10

    output_dir: str = "results"

    def __post_init__(self):
        """Validate configuration."""
        self.seeds = [int(s) for s in self.seeds]
        _require(self.topology in TOPOLOGY_KINDS, f"Unknown topology: {self.topology}")
        _require(len(self.seeds) > 0, "Need at least one seed")
        _require(len(set(self.seeds)) == len(self.seeds), "Seeds must be distinct")
        _require(self.eval_every > 0, "eval_every must be positive")
        _require(self.eval_episodes >= 1, "eval_episodes must be >= 1")

    def config_hash(self) -> str:
        """Stable hash of everything that affects a seed's results."""
        payload = {
            "env": asdict(self.env),
            "learner": asdict(self.learner),
            "topology": self.topology,
            "eval_every": self.eval_every,
            "eval_episodes": self.eval_episodes,
        }
        blob = json.dumps(payload, sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _full_env(subteam_size: int, capture_mode: str) -> EnvConfig:
    # Sub-teams of three need 9 predators
    n_predators = 8 if subteam_size == 2 else 9
    return EnvConfig(
        grid_size=10,
        n_predators=n_predators,
        n_prey=8,
        subteam_size=subteam_size,
        capture_mode=capture_mode,
        max_steps=200,
    )


def _desk_learner() -> LearnerConfig:
    return LearnerConfig(
        max_env_steps=100_000,
        replay_capacity=50_000,
        target_sync_period=1000,
        train_start=1000,
        log_interval=200,
    )


def _tiny_env(penalty: float = -2.0, capture_mode: str = "homogeneous") -> EnvConfig:
    return EnvConfig(
        grid_size=3,
        n_predators=2,
        n_prey=1,
        subteam_size=2,
        capture_mode=capture_mode,
        miscapture_penalty=penalty,
        max_steps=20,
        obs_window=3,
    )


def _matrix_learner() -> LearnerConfig:
    return LearnerConfig(
        gamma=0.99,
        learning_rate=5e-3,
        epsilon_decay_steps=3000,
        max_env_steps=5000,
        replay_capacity=5000,
        batch_size=32,
        target_sync_period=200,
        train_start=100,
        hidden_sizes=(16,),
        log_interval=500,
    )


PRESETS = {
    "2homo": lambda: ExperimentConfig(name="2homo", env=_full_env(2, "homogeneous")),
    "2hetero": lambda: ExperimentConfig(name="2hetero", env=_full_env(2, "heterogeneous")),
    "3homo": lambda: ExperimentConfig(name="3homo", env=_full_env(3, "homogeneous")),
    "3hetero": lambda: ExperimentConfig(name="3hetero", env=_full_env(3, "heterogeneous")),
    "desk-2homo": lambda: ExperimentConfig(
        name="desk-2homo",
        env=EnvConfig(grid_size=6, n_predators=4, n_prey=2, subteam_size=2, max_steps=50),
        learner=_desk_learner(),
    ),
    "desk-2homo-nopenalty": lambda: ExperimentConfig(
        name="desk-2homo-nopenalty",
        env=EnvConfig(grid_size=6, n_predators=4, n_prey=2, subteam_size=2, max_steps=50,
                      miscapture_penalty=0.0),
        learner=_desk_learner(),
    ),
    "tiny": lambda: ExperimentConfig(name="tiny", env=_tiny_env(), seeds=[0, 1, 2]),
    "tiny-nopenalty": lambda: ExperimentConfig(name="tiny-nopenalty", env=_tiny_env(0.0), seeds=[0, 1, 2]),
    "tiny-hetero": lambda: ExperimentConfig(
        name="tiny-hetero", env=_tiny_env(capture_mode="heterogeneous"), seeds=[0, 1, 2]
    ),
    "matrix": lambda: ExperimentConfig(
        name="matrix",
        env=EnvConfig(grid_size=3, n_predators=2, n_prey=1, subteam_size=2, max_steps=1,
                      obs_window=1, task="matrix", n_neutral=9),
        learner=_matrix_learner(),
        eval_every=250,
        eval_episodes=1,
    ),
}


def create_preset_config(name: str) -> ExperimentConfig:
    """Create one of the named experiment presets."""
    if name not in PRESETS:
        raise ConfigError(f"Unknown preset: {name} (choose from {', '.join(PRESETS)})")
    return PRESETS[name]()


def create_default_config() -> ExperimentConfig:
    """Create default experiment configuration (the desk-scale preset)."""
    return create_preset_config("desk-2homo")
