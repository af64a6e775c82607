"""Exception types shared across the engines."""


class PomcError(Exception):
    """Base class for all library errors."""


class InvalidParameter(PomcError, ValueError):
    pass


class InvalidState(PomcError, ValueError):
    pass


class DimensionMismatch(PomcError, ValueError):
    pass


class EmptyPath(PomcError, ValueError):
    pass


class InstabilityError(PomcError, ValueError):
    """A parameter violates the model's stationarity condition."""


class InsufficientData(PomcError, ValueError):
    pass


class ConvergenceError(PomcError, RuntimeError):
    """An iterative routine hit its iteration cap.

    ``estimate`` carries the last iterate so callers can still report it.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class DegeneracyWarning(UserWarning):
    """Particle system collapsed to very few effective particles."""


class CensoringWarning(UserWarning):
    """Too many excursions reached the censoring cap."""
