"""Exception taxonomy shared by all critbrw modules."""


class CritbrwError(Exception):
    """Base class for all domain errors raised by this package."""


# -- law construction -------------------------------------------------------

class NotNormalized(CritbrwError):
    """Probability mass deviates from 1 beyond the repairable tolerance."""


class NotCritical(CritbrwError):
    """Offspring mean differs from 1 beyond tolerance."""


class NonzeroDrift(CritbrwError):
    """Step mean differs from 0 beyond tolerance."""


class DegenerateVariance(CritbrwError):
    """Law has zero variance (e.g. a point mass)."""


class CutoffTooSmall(CritbrwError):
    """Heavy-tail truncation cutoff below the supported minimum."""


class OutOfRange(CritbrwError):
    """Function argument outside its documented domain."""


class BadLawSpec(CritbrwError):
    """Law mini-language string could not be parsed or validated."""


# -- solvers -----------------------------------------------------------------

class IterCapExceeded(CritbrwError):
    """Fixed-point iteration hit its sweep cap before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class GridTooSmall(CritbrwError):
    """Grid boundary clamp visibly contaminates the requested values."""


class GridTooSmallWarning(UserWarning):
    """Non-fatal variant: boundary clamp bias is detectable but tolerated."""


class GridMismatch(CritbrwError):
    """Two gridded objects that must be comparable are not."""


class BisectionFailure(CritbrwError):
    """Shooting bisection could not bracket or refine the boundary slope."""


class NegativeArgument(CritbrwError):
    """Profile evaluated left of its domain."""


class StabilityViolation(CritbrwError):
    """Explicit scheme time step exceeds the stability bound."""


# -- simulation --------------------------------------------------------------

class ParticleOverflow(CritbrwError):
    """Single-generation population exceeded the 64-bit safety bound."""


class AttemptBudgetExceeded(CritbrwError):
    """Rejection sampler exhausted its attempt budget."""


class StepCapExceeded(CritbrwError):
    """Random walk failed to hit its target level within the step cap."""


class PathBudgetExceeded(CritbrwError):
    """Too many Monte Carlo paths were truncated at the time horizon."""


# -- estimators ---------------------------------------------------------------

class BadCounts(CritbrwError):
    """Hit/trial counts are inconsistent."""


class DegenerateInput(CritbrwError):
    """Estimator input too small or degenerate to produce a fit."""
