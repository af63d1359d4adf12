"""Exception types raised across the package.

Each class names the contract it enforces; the message carries the
offending values so failures are diagnosable from logs alone.
"""


class SaddleflowError(Exception):
    """Base class for all package-specific errors."""


class DimensionMismatch(SaddleflowError):
    """Matrix or vector dimensions are inconsistent."""


class NotHurwitz(SaddleflowError):
    """Some eigenvalue of the state matrix has real part >= the margin."""


class RankDeficientC(SaddleflowError):
    """Columns of the output matrix C are linearly dependent."""


class SingularA(SaddleflowError):
    """State matrix is singular to working precision (condition > 1e12)."""


class NoConvergence(SaddleflowError):
    """An iterative solve exhausted its iteration budget."""


class Infeasible(SaddleflowError):
    """No feasible point exists for the requested solve."""


class UnsupportedSet(SaddleflowError):
    """Input-set kind is not one of box | nonneg-orthant | ball | full-space."""


class LimitNotSettled(SaddleflowError):
    """One-sided projection quotients did not converge along delta_seq."""


class UnknownLink(SaddleflowError):
    """A referenced traffic link id does not exist in the network."""


class QPNoConvergence(SaddleflowError):
    """The finite-horizon QP solver exhausted its iteration cap."""


class InfeasibleHorizon(SaddleflowError):
    """Density constraints are inconsistent over the prediction horizon."""


class MissingCertificate(SaddleflowError):
    """A stability certificate is required but was not supplied."""


class NonpositiveRate(SaddleflowError):
    """Requested controller gain makes the certified decay rate <= 0."""


class GainRatioViolated(SaddleflowError):
    """Equality-track gains violate the primal/dual ratio condition."""


class PzNotPD(SaddleflowError):
    """The equality-track comparison matrix P_z is not positive definite."""


class ConstantViolated(SaddleflowError):
    """Sampled monotonicity/Lipschitz estimates contradict declared constants."""


class StepTooLarge(SaddleflowError):
    """Integration step exceeds one tenth of the plant time constant."""


class NonFiniteState(SaddleflowError):
    """Integration produced NaN or Inf; message carries time and state."""


class ConfigInvalid(SaddleflowError):
    """A scenario config failed validation; message lists every violation."""


class IncompatibleScenarios(SaddleflowError):
    """Comparison scenarios differ in network or horizon."""


class FailedCertificate(SaddleflowError):
    """Envelope requested from a certificate whose conditions do not hold."""


class NegativeDensity(SaddleflowError):
    """A traffic density is below the -1e-9 tolerance."""
