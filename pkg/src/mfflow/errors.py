"""Exception types shared across the simulator modules."""


class MfflowError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(MfflowError, ValueError):
    """Invalid or inconsistent experiment configuration (CLI exit code 2)."""


class NumericalBlowupError(MfflowError, FloatingPointError):
    """NaN or inf appeared in an update (CLI exit code 3).

    Carries the iteration index when the training loop knows it.
    """

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration

    def __str__(self) -> str:
        base = super().__str__()
        if self.iteration is not None:
            return f"{base} (iteration {self.iteration})"
        return base


class GroupTooLargeError(MfflowError, ValueError):
    """Transform group closure exceeded the configured cap."""


class DegenerateParticleError(MfflowError, ValueError):
    """A particle has a zero direction vector where an angle is required."""


class IllPosedError(MfflowError, ValueError):
    """Singular or numerically rank-deficient design matrix."""


class InsufficientDataError(MfflowError, ValueError):
    """Not enough usable points for a fit."""


class UndefinedDistanceError(MfflowError, ValueError):
    """Transport distance requested for an empty (zero-mass) side."""


class SchemaError(MfflowError, ValueError):
    """A run directory is missing a required series or column."""
