"""Exception taxonomy shared across the toolkit.

The CLI maps these onto exit codes: configuration/usage -> 2, I/O -> 3
(plain OSError), numeric failures -> 4.
"""


class DimensionError(ValueError):
    """Tensor/array shapes are incompatible for the requested operation."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class ConfigurationError(ValueError):
    """Invalid configuration value or option combination."""


class DataError(ValueError):
    """Input data malformed or insufficient (bad timestamps, short signals...)."""


class DegenerateGeometryError(ValueError):
    """Geometric input has no well-defined answer (coincident points, collinear trackers)."""


class RangeError(ValueError):
    """A query falls outside the supported range (e.g. extrapolation)."""


class NumericError(ArithmeticError):
    """NaN/Inf or other numeric failure in a computation."""
