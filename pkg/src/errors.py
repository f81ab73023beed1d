"""
Exception hierarchy for the Synchronized Predator-Prey engine.
"""


class SyncGridError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SyncGridError, ValueError):
    """Invalid configuration (bad team sizes, grid too small, unknown keys)."""


class ContractError(SyncGridError, ValueError):
    """A caller broke an operation's precondition (unavailable action, bad shapes)."""


class SizeError(SyncGridError):
    """An enumeration would exceed its hard cap."""


class NumericError(SyncGridError, ArithmeticError):
    """An iterative solver failed to converge."""


class CheckpointError(SyncGridError):
    """A checkpoint file or manifest does not match what was expected."""
