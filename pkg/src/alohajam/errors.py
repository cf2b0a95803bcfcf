"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class InfeasiblePolicyError(ValueError):
    """Jamming policy violates the stability constraints of a closed form."""


class InstabilityError(ValueError):
    """Offered load at or above one where a stable system is required."""


class InsufficientDataError(ValueError):
    """Too few active slots to estimate channel statistics."""


class ConvergenceError(RuntimeError):
    """Stationary solve did not reach the residual target."""


class UncertifiedError(ValueError):
    """An occupancy distribution without a certified truncation was supplied."""


class TailMassWarning(UserWarning):
    """Truncated chain keeps too much stationary mass on the cap boundary."""


class DegenerateChannelWarning(UserWarning):
    """Crossover probability of one; the channel carries nothing."""


class OverloadWarning(UserWarning):
    """Offered load is at or above one; no jamming budget remains."""
