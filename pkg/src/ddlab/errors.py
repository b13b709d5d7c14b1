"""Exception types shared across the package."""


class DdlabError(Exception):
    """Base class for all package errors."""


class DomainError(DdlabError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class ValidationError(DdlabError, ValueError):
    """A constructed object violates its invariants."""


class UnsupportedOperationError(DdlabError, TypeError):
    """The operation is undefined for the given alphabet or process kind."""


class SingularScoreError(DdlabError, ZeroDivisionError):
    """A score ratio has a zero denominator (state carries no forward mass)."""


class ResourceError(DdlabError, RuntimeError):
    """An exact computation would exceed the configured dense-storage cap."""


class ConfigError(DdlabError, ValueError):
    """An experiment or schedule configuration is inconsistent."""


class QuadratureError(DdlabError, RuntimeError):
    """Adaptive quadrature failed to reach the requested tolerance."""
