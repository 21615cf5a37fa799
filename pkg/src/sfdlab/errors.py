"""Exception hierarchy shared by every sfdlab module."""


class SfdError(Exception):
    """Base class for all sfdlab errors."""


class InvalidParameterError(SfdError, ValueError):
    pass


class InvalidInputError(SfdError, ValueError):
    pass


class InvalidSpecError(SfdError, ValueError):
    pass


class DomainError(SfdError, ValueError):
    """Raised when a nonlinearity is evaluated at or below the singular level."""


class UnsupportedDimensionError(SfdError, NotImplementedError):
    pass


class SubcriticalError(SfdError, ValueError):
    """The Riesz potential only exists for N > 2s."""


class UnsupportedRegimeError(SfdError, ValueError):
    pass


class StepFailure(SfdError, RuntimeError):
    """An implicit step whose inner Newton solve did not converge."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class InconclusiveError(SfdError, RuntimeError):
    pass
