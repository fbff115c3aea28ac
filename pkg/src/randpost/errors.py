"""Exception types raised across the package."""


class RandPostError(ValueError):
    """Base class for invalid inputs and numerical failures."""


class DimensionMismatch(RandPostError):
    pass


class NotSymmetric(RandPostError):
    pass


class NotPositiveDefinite(RandPostError):
    pass


class IllConditioned(RandPostError):
    pass


class InsufficientData(RandPostError):
    pass


class NonPositiveValue(RandPostError):
    pass


class NonPositiveWeight(RandPostError):
    pass


class UnsupportedDimension(RandPostError):
    pass


class GridTooCoarse(RandPostError):
    """Raised when a density does not integrate to one on a quadrature grid."""


class ConfigError(RandPostError):
    pass


class EstimatorUnderflow(RuntimeWarning):
    """A likelihood estimate was not representable; the step was rejected."""
