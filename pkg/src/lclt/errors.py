"""Exception types shared across the package."""


class LcltError(Exception):
    """Base class for package errors."""


class DimensionMismatchError(LcltError, ValueError):
    """Input vector/matrix dimensions do not match the declared dimension."""


class ConfigError(LcltError, ValueError):
    """Invalid configuration or parameter combination."""


class UnsupportedStartError(ConfigError):
    """Requested chain initialization is not available for this potential."""


class NumericalFailureError(LcltError, RuntimeError):
    """A numerical routine failed to converge or produced an invalid value."""


class SingularMatrixError(NumericalFailureError):
    """Matrix is singular (or indefinite) where positive definiteness is required."""


class SizeCapError(LcltError, ValueError):
    """Problem size exceeds the documented cap for an exact method."""


class MissingDerivativeError(LcltError, ValueError):
    """Stein gradient field does not provide the requested derivative order."""
