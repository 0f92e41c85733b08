"""Exception types raised by mrdtest."""


class MRDError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(MRDError, ValueError):
    """A parameter lies outside the region where the model is defined."""


class FactorizationError(MRDError, ValueError):
    """A (sub)matrix failed a positive-definiteness check.

    Attributes
    ----------
    indices : tuple of int
        Indices (0-based, into the full model) of the offending submatrix.
    """

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = tuple(int(i) for i in indices)


class ScheduleError(MRDError, ValueError):
    """A critical-value schedule is not strictly decreasing and positive."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class NumericalFailure(MRDError, RuntimeError):
    """An iterative solver did not converge within its guard."""
