"""Exception types shared across the pipeline."""


class IovcmError(Exception):
    """Base class for all package errors."""


class ConfigError(IovcmError):
    """Invalid or unreadable run configuration."""


class NonErgodic(IovcmError):
    """Power iteration did not converge to a unique stationary distribution."""


class DimensionMismatch(IovcmError, ValueError):
    pass


class TraceMismatch(IovcmError, ValueError):
    pass


class InsufficientData(IovcmError):
    pass


class EmptyInput(IovcmError, ValueError):
    pass


class TooFewPoints(IovcmError, ValueError):
    pass


class DegenerateClustering(IovcmError, ValueError):
    pass


class QueueFull(IovcmError):
    pass


class LengthMismatch(IovcmError, ValueError):
    pass


class CheckpointError(IovcmError):
    pass


class InvariantViolation(IovcmError, AssertionError):
    """An internal invariant (conservation, monotone WCSS, ...) failed at runtime."""


class DataError(IovcmError):
    """An input data file is missing, malformed, or inconsistent."""
