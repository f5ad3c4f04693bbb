"""Exception types shared across the package."""


class BnmlError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(BnmlError):
    """A matrix required to be positive definite has a non-positive pivot/eigenvalue."""


class NoConvergence(BnmlError):
    """An iterative solver hit its iteration cap before reaching tolerance."""


class DegenerateDirection(BnmlError):
    """The weight vector is (numerically) in the null space of the data covariance."""


class EmptyDataset(BnmlError):
    """A dataset operation received zero samples."""


class DimensionMismatch(BnmlError):
    """Input vectors do not share a common dimension."""


class ConfigInvalid(BnmlError):
    """A configuration violates its stated invariants."""


class Infeasible(BnmlError):
    """The uniform-margin equation system has no solution within tolerance."""


class NotSeparable(BnmlError):
    """The hard-margin problem is infeasible (dual objective diverges)."""


class NotSorted(BnmlError):
    """A sequence argument violates its required monotonicity."""


class InsufficientData(BnmlError):
    """Not enough usable rows for a regression or fit."""


class Diverged(BnmlError):
    """Training produced a non-finite loss.  Carries the partial trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
