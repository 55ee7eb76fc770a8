"""Exception hierarchy shared by all gfc modules."""


class GfcError(Exception):
    """Base class for every error raised by gfc."""


class ParameterError(GfcError, ValueError):
    """A parameter lies outside its admissible domain."""


class UnsupportedError(GfcError):
    """The requested operation is not available for this input."""


class UnsupportedOrderError(UnsupportedError):
    """Derivative order beyond the implementation cap."""


class MethodMismatchError(UnsupportedError):
    """A closed-form method was requested for an incompatible spec."""


class ResolutionError(GfcError):
    """Grid too coarse for the requested quadrature."""


class AccuracyLossError(GfcError, ArithmeticError):
    """Requested accuracy is unreachable; the best estimate is attached."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class SimulationBudgetError(GfcError):
    """A sampler exhausted its horizon or event budget."""
