"""Exception hierarchy shared by all modules."""


class PhytoColumnError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PhytoColumnError, ValueError):
    """An argument lies outside the domain of a pointwise evaluation."""


class ModelValidityError(PhytoColumnError, ValueError):
    """A model field evaluated to a physically inadmissible value."""


class ConfigError(PhytoColumnError, ValueError):
    """Malformed or inconsistent configuration."""


class ScalingError(PhytoColumnError, OverflowError):
    """The exponential z/v change of variables would overflow."""


class NumericalError(PhytoColumnError, ArithmeticError):
    """A solver produced a non-finite state or hit a singular pivot.

    ``last_good`` holds the last finite state when one is available.
    """

    def __init__(self, message, *, last_good=None, time=None):
        super().__init__(message)
        self.last_good = last_good
        self.time = time


class ConvergenceError(NumericalError):
    """An iterative method exhausted its iteration budget."""

    def __init__(self, message, *, last_estimate=None, history=None):
        super().__init__(message)
        self.last_estimate = last_estimate
        self.history = history


class R0RangeError(NumericalError):
    """The R0 bracket could not be established."""
