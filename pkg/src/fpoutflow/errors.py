"""Exception hierarchy shared by all modules."""


class FPOutflowError(Exception):
    """Base class for errors raised by this package."""


class ConfigurationError(FPOutflowError, ValueError):
    """Invalid parameters or an unusable problem setup."""


class UsageError(FPOutflowError, ValueError):
    """Objects combined in a way that makes no sense, e.g. densities on different coverings."""


class NumericalError(FPOutflowError, ArithmeticError):
    """A computation produced non-finite values."""


class StiffIntegrationError(NumericalError):
    """The adaptive integrator's step size underflowed."""


class AccuracyError(NumericalError):
    """An iterative method did not reach the requested tolerance.

    Attributes
    ----------
    achieved : float
        Best error estimate reached before giving up.
    """

    def __init__(self, message, achieved=float("nan")):
        super().__init__(message)
        self.achieved = achieved


class SolverError(NumericalError):
    """A linear solve failed or returned a residual above tolerance."""
