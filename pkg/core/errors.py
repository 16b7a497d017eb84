# core/errors.py
"""
Exception and warning hierarchy for SourceLens.

This module provides:
- SourceLensError as the common root
- Geometry failures (trapping rays, non-convex boundaries)
- Numerical failures (non-converging iterations, inconsistent pipelines)
- Warnings for incompatible Neumann data and ill-conditioned systems

The CLI maps these onto exit codes, see ``sourcelens_cli.EXIT_CODES``.
"""


class SourceLensError(Exception):
    """Base class for every error raised by SourceLens."""


class ConfigError(SourceLensError, ValueError):
    """Invalid experiment configuration or domain specification."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        if path:
            message = f"{message} (at '{path}')"
        super().__init__(message)


class AliasError(SourceLensError, ValueError):
    """Angular sampling too coarse for the degree of a fiber field."""


class AdmissibilityError(SourceLensError, ValueError):
    """Optical parameters violate admissibility or subcriticality."""


# ============================================================================
# Geometry
# ============================================================================

class GeometryError(SourceLensError):
    """The metric does not make the disk a simple domain."""


class NonTrappingError(GeometryError):
    """A geodesic did not reach the boundary within the configured time cap."""


class UnboundedConvexityError(GeometryError):
    """The ratio tau/|mu| keeps growing as directions approach glancing."""


# ============================================================================
# Numerics
# ============================================================================

class NumericalFailure(SourceLensError):
    """A numerical procedure failed to deliver a trustworthy answer."""


class NonConvergenceError(NumericalFailure):
    """Source iteration stopped contracting or hit the iteration cap."""

    def __init__(self, message: str, residuals=None):
        self.residuals = list(residuals or [])
        super().__init__(message)


class ConsistencyFailure(NumericalFailure):
    """A pipeline residual exceeded its threshold."""

    def __init__(self, message: str, residuals=None):
        self.residuals = dict(residuals or {})
        super().__init__(message)


class DegreeOverflowError(NumericalFailure):
    """The angular spectrum of a transport solution is not resolved at N_max."""


# ============================================================================
# Warnings
# ============================================================================

class CompatibilityWarning(UserWarning):
    """Neumann data incompatible with the right-hand side; projected."""


class IllConditionedWarning(UserWarning):
    """Normal equations of the least-squares backend are ill-conditioned."""
