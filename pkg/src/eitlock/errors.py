"""Exception types shared across the package."""


class EitlockError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(EitlockError):
    """Scenario configuration failed validation. Carries all violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class QuadratureConvergenceError(EitlockError):
    """Doubling the velocity-quadrature node count changed the result by
    more than the configured tolerance."""


class NoCrossingError(EitlockError):
    """No sign change of the error signal inside the search window."""


class AmbiguousCrossingError(EitlockError):
    """More than one sign change of the error signal inside the window."""


class WrongSignError(EitlockError):
    """Loop sign and discriminant slope sign disagree; the servo would
    push the laser away from the crossing."""


class MemoryBudgetError(EitlockError):
    """Requested time series exceeds the configured sample budget."""


class ResolutionError(EitlockError):
    """Spectral resolution bandwidth too coarse for the requested width."""


class InsufficientSamplesError(EitlockError):
    """Series too short for the requested averaging time."""


class FitConvergenceError(EitlockError):
    """Damped least-squares did not converge within the iteration budget."""


class DegenerateJacobianError(EitlockError):
    """Jacobian column with no effect on the residual; parameter not
    identifiable from the data."""
