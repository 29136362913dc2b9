"""Exception types shared across the package.

The CLI maps each family to its own exit code.
"""


class OccupancyError(Exception):
    """Base class for all package errors."""


class ConfigError(OccupancyError, ValueError):
    """Invalid configuration or argument values."""


class IngestError(OccupancyError):
    """Unreadable or malformed input data (audio, CSV, JSON)."""


class InsufficientAudioError(IngestError, ValueError):
    """Clip is too short to produce a single analysis frame."""


class DimensionError(OccupancyError, ValueError):
    """Feature dimensionality does not match a model."""


class NumericError(OccupancyError, ArithmeticError):
    """A numerical procedure failed (non-convergence, all fits failed, ...)."""


class ConvergenceError(NumericError):
    """An iterative fit did not converge within its iteration budget."""
