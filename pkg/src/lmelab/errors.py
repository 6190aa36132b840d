"""Shared exception and warning types."""


class LmeLabError(Exception):
    """Base class for package-specific errors."""


class ConfigError(LmeLabError):
    """Malformed or inconsistent run configuration (CLI exit code 2)."""


class ContractViolation(LmeLabError):
    """A numerical contract failed: bracket failure, negative denominator,
    projection-distance breach and the like (CLI exit code 3)."""


class QuadratureWarning(UserWarning):
    """Adaptive quadrature did not certify the requested tolerance."""
