"""Exception hierarchy. The CLI maps each class to an exit code."""


class HDMFError(Exception):
    """Base class for all package errors."""


class ConfigError(HDMFError, ValueError):
    """Invalid configuration or hyper-parameters."""


class DataError(HDMFError, ValueError):
    """Malformed, missing or inconsistent input data."""


class CheckpointError(DataError):
    """Corrupt, truncated or incompatible checkpoint file."""


class DivergenceError(HDMFError, FloatingPointError):
    """Training produced a non-finite loss or parameter."""
