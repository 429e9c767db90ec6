"""Exception hierarchy for qlax."""


class QlaxError(Exception):
    """Base class for all library errors."""


class ShapeError(QlaxError, ValueError):
    """Leg labels or dimensions do not line up."""


class NumericError(QlaxError, ArithmeticError):
    """Non-finite input to a matrix function."""


class SingularityError(QlaxError, ArithmeticError):
    """Matrix is singular or too ill-conditioned to invert."""


class FactorizationError(SingularityError):
    """A pivot block of the block Gauss factorization is singular."""


class ParameterError(QlaxError, ValueError):
    """Invalid scalar parameter (q, step size, site index, ...)."""


class CapacityError(QlaxError, ValueError):
    """Requested dense operator exceeds the dimension cap."""


class UsageError(QlaxError, ValueError):
    """Unknown suite or observable name."""
