"""Exception types raised across the package."""


class RSDQNError(Exception):
    """Base class for all package errors."""


class DimensionError(RSDQNError, ValueError):
    """Tensor shapes do not line up."""


class StateError(RSDQNError, RuntimeError):
    """An object was used in the wrong lifecycle state."""


class ConfigError(RSDQNError, ValueError):
    """Invalid or inconsistent configuration."""


class CheckpointError(RSDQNError, ValueError):
    """Checkpoint file is malformed or does not match the expected layout."""
