"""Exception hierarchy shared by every module.

The CLI maps each class to an exit code, so keep the hierarchy flat.
"""


class CovNormError(Exception):
    """Base class for all library errors."""


class DimensionError(CovNormError, ValueError):
    """Shapes do not line up."""


class InputError(CovNormError, ValueError):
    """Non-finite or otherwise malformed numeric input."""


class DegeneracyError(CovNormError):
    """A factor cannot be built because a variance is zero or too small."""


class RankDeficiencyError(CovNormError):
    """Normal equations are singular; retry with ridge > 0."""


class InsufficientDataError(CovNormError):
    """Too few samples to estimate the requested statistic."""


class OptimizationError(CovNormError):
    """Iterative fit diverged."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class FormatError(CovNormError, ValueError):
    """A binary file failed magic, shape or finiteness validation."""
