"""
Synchronized Predator-Prey Benchmark

A gridworld where predator sub-teams must capture prey simultaneously, an exact
oracle that certifies synchronization tasks on tiny instances, and a
coordination-graph Q-learner with a multi-seed experiment harness.
"""

__version__ = "1.0.0"

from .config import (
    EnvConfig,
    LearnerConfig,
    ExperimentConfig,
    create_default_config,
    create_preset_config,
)
from .config_loader import load_config_from_yaml, print_config_summary
from .errors import (
    SyncGridError,
    ConfigError,
    ContractError,
    SizeError,
    NumericError,
    CheckpointError,
)
from .grid_env import SyncPredatorPrey, GridState, env_new
from .matrix_game import OneShotGame
from .mst_oracle import lift_env, exact_q, classify, is_mst
from .coord_graph import make_topology, q_tot, brute_force_argmax, max_plus
from .dcg import train
from .experiment import run_experiment, sweep, verify, render

__all__ = [
    "EnvConfig",
    "LearnerConfig",
    "ExperimentConfig",
    "create_default_config",
    "create_preset_config",
    "load_config_from_yaml",
    "print_config_summary",
    "SyncGridError",
    "ConfigError",
    "ContractError",
    "SizeError",
    "NumericError",
    "CheckpointError",
    "SyncPredatorPrey",
    "GridState",
    "env_new",
    "OneShotGame",
    "lift_env",
    "exact_q",
    "classify",
    "is_mst",
    "make_topology",
    "q_tot",
    "brute_force_argmax",
    "max_plus",
    "train",
    "run_experiment",
    "sweep",
    "verify",
    "render",
]
