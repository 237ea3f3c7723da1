"""Exception types shared across the package."""

from __future__ import annotations


class RebalanceError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(RebalanceError):
    """Array shapes or treated counts do not agree."""


class SingularCovariance(RebalanceError):
    """The pooled covariate covariance is not invertible."""


class InvalidSwitch(RebalanceError):
    """A pair switch was requested with w[i] != 1 or w[j] != 0."""


class DomainError(RebalanceError):
    """Argument outside the mathematical domain of a distribution routine."""


class IterationCapExceeded(RebalanceError):
    """A sampler hit its safety cap before finding an acceptable assignment.

    Carries the best assignment seen so far and its imbalance, so a
    caller can decide whether to proceed with it anyway.
    """

    def __init__(self, message, best_assignment=None, best_m=None):
        super().__init__(message)
        self.best_assignment = best_assignment
        self.best_m = best_m


class EmptyInput(RebalanceError):
    """An operation that needs at least one sample received none."""


class EigFailure(RebalanceError):
    """Power iteration did not converge within its iteration cap."""


class MissingBaseline(RebalanceError):
    """Variance-reduction summaries require a complete-randomization baseline."""


class DegenerateDesign(RebalanceError):
    """Every resampled assignment equals the observed one."""


class BracketFailure(RebalanceError):
    """The bisection bracket does not straddle the target level."""
