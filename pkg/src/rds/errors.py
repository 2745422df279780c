"""Exception types shared across the toolkit."""

from __future__ import annotations


class RdsError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameter(RdsError):
    """Map parameters violate a validity condition of the family."""


class DegenerateFiber(RdsError):
    """The noise-to-image map is (numerically) non-injective at some point."""


class DimensionMismatch(RdsError):
    """Vector length does not match the operator it is applied to."""


class EmptyWindow(RdsError):
    """A window contains no grid cells."""


class NoConvergence(RdsError):
    """Iterative eigensolver hit its iteration cap.

    Carries the best residual reached so the caller can decide whether
    the partial answer is still usable.
    """

    def __init__(self, message: str, best_residual: float = float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class SupportOverlap(RdsError):
    """Recovered ergodic supports overlap; the unit cluster was misgrouped."""


class CycleMismatch(RdsError):
    """Component-mapping cycle length disagrees with the peripheral spectrum."""


class AllBelowThreshold(RdsError):
    """No density cell reaches the support threshold."""


class NoFixedSet(RdsError):
    """Set-valued iteration did not stabilize within the iteration cap."""


class AllCensored(RdsError):
    """Every Monte Carlo escape trial hit the step cap."""


class LostTrack(RdsError):
    """Continuation of a periodic orbit failed inside the parameter range."""


class UnboundedKernel(RdsError):
    """Transition density is unbounded; no smooth representation exists."""


class MulticomponentSupport(RdsError):
    """Kernel support has more than one component; representation requires one."""


class UsageError(RdsError):
    """Invalid command line or config input."""
