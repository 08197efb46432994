"""Exception types shared across the package."""


class KflowError(Exception):
    """Base class for all package errors."""


class ChartDomainError(KflowError):
    """A point lies outside the validity region of its coordinate chart."""


class GeodesicEscapeError(KflowError):
    """A geodesic (or a flowing node) left every chart's validity region."""


class LogDivergenceError(KflowError):
    """Shooting iteration for the log map failed to converge."""

    def __init__(self, message, last_residual=None):
        super().__init__(message)
        self.last_residual = last_residual


class DegenerateImmersionError(KflowError):
    """The immersion Jacobian dropped below the nondegeneracy floor."""


class CalibrationError(KflowError):
    """No admissible kernel radius exists above the grid-resolution floor."""


class RedistributionActiveError(KflowError):
    """A residual check was requested on states produced with tangential
    redistribution enabled, where the Lagrangian time derivative is not the
    flow derivative."""


class CurvedModelError(KflowError):
    """An operation restricted to flat ambient models was called on a curved
    one."""


class ConfigError(KflowError):
    """Run configuration failed validation."""
