"""Exception types raised across the package."""


class BlowUpError(ArithmeticError):
    """A solver step produced non-finite values."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"non-finite values after step {step}")


class EllipticityError(ValueError):
    """A noise coefficient left its ellipticity window or is singular."""


class ValidationError(ValueError):
    """An input violates a stated hypothesis (bound, Lipschitz, tube radius...)."""


class ConfigurationError(ValueError):
    """Grids, schemes or experiment settings are inconsistent."""


class ConditioningError(ArithmeticError):
    """A covariance system is too ill-conditioned to solve reliably."""


class InsufficientDataError(ValueError):
    """Too few Monte Carlo exceedances to fit a tail."""
