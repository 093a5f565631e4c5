"""Exception hierarchy for the cascade-laser optomechanics toolkit."""


class CascadeLaserError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(CascadeLaserError):
    """A parameter violates an invariant. `field` names the offender."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnknownPresetError(ValidationError):
    def __init__(self, name, known):
        self.known = sorted(known)
        super().__init__("preset", f"unknown preset {name!r}; known presets: "
                         + ", ".join(self.known))


class DegenerateParametersError(CascadeLaserError):
    """A linear solve in the gain-medium layer became singular."""


class AboveLasingThresholdError(CascadeLaserError):
    """Effective cavity damping is non-positive; no valid steady state."""


class SolverError(CascadeLaserError):
    """A root finder or continuation step failed with diagnostics."""


class EliminationError(CascadeLaserError):
    """Adiabatic elimination of the cavity modes is invalid (names the
    violated condition)."""


class UnphysicalCovarianceError(CascadeLaserError):
    """The covariance matrix fed to the entanglement measure is unphysical."""
