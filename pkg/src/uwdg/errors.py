"""Exception types shared across the package."""


class UWDGError(Exception):
    """Base class for all package errors."""


class MeshError(UWDGError):
    """Invalid mesh construction parameters."""


class DegenerateFluxError(UWDGError):
    """Flux parameters sit on the local boundary alpha1^2 + beta1*beta2 = 1/4,
    where the interface blocks are singular and the global machinery does not
    apply.  Callers should route to the element-wise projection instead."""


class NonexistentProjectionError(UWDGError):
    """The flux-adapted projection does not exist for these parameters."""


class SingularSystemError(UWDGError):
    """A linear system turned out to be singular (or numerically so)."""


class ConditioningError(UWDGError):
    """A system is formally invertible but too ill-conditioned to solve
    reliably at the requested tolerance."""


class ConfigError(UWDGError):
    """Invalid or inconsistent study configuration."""
