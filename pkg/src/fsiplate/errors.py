"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit with 2,
collisions with 3 and solver breakdowns with 4.
"""


class FsiError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ValidationError(FsiError, ValueError):
    """Input data or configuration violates a stated invariant."""

    exit_code = 2


class GridMismatchError(ValidationError):
    """Two fields that must share a grid do not."""


class DimensionError(ValidationError):
    """An operation needs a different plate or fluid dimension."""


class DomainError(ValidationError):
    """A scalar argument is outside the domain of a formula."""


class SchemaError(ValidationError):
    """A persisted file has the wrong schema version or is truncated."""


class TopologyError(ValidationError):
    """An operation needs a periodic plate but got a clamped one (or vice versa)."""


class MissingTemperatureError(ValidationError):
    """A thermoelastic operation was called on a state without temperature."""


class InitialDataError(ValidationError):
    """Base class for violated compatibility conditions of the initial data."""


class NonPositiveDensityError(InitialDataError):
    """Momentum is nonzero on a node where the initial density vanishes."""


class InfiniteKineticEnergyError(InitialDataError):
    """The initial kinetic energy density (rho u)^2 / rho is not finite."""


class ClampedDataError(InitialDataError):
    """Clamped plate data do not vanish together with their normal derivative."""


class InitialCollisionError(InitialDataError):
    """The initial displacement touches or crosses the channel bottom."""


class CollisionError(FsiError):
    """The plate reached the bottom of the channel, 1 + w <= threshold."""

    exit_code = 3


class VacuumError(FsiError):
    """Density dropped below the floor where the momentum equation divides by it."""

    exit_code = 4


class SolverDivergenceError(FsiError):
    """A linear or nonlinear solve failed or produced non-finite values."""

    exit_code = 4
