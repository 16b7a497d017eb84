"""Configuration constants and environment helpers"""
import logging
import os


def _coerce_positive_int(value, default, minimum=1):
    """Ensure configuration values are positive integers."""
    try:
        if value is None:
            raise ValueError
        coerced = int(value)
        return max(minimum, coerced)
    except (ValueError, TypeError):
        return default


def _coerce_positive_float(value, default, minimum=0.0):
    """Ensure configuration values are positive floats."""
    try:
        if value is None:
            raise ValueError
        coerced = float(value)
        return max(minimum, coerced)
    except (ValueError, TypeError):
        return default


def _get_config_int(key, default, minimum=1):
    """Look up integer configuration values from the environment."""
    candidate = os.getenv(key)
    if candidate in (None, ""):
        return default
    return _coerce_positive_int(candidate, default, minimum)


def _get_config_float(key, default, minimum=0.0):
    """Look up float configuration values from the environment."""
    candidate = os.getenv(key)
    if candidate in (None, ""):
        return default
    return _coerce_positive_float(candidate, default, minimum)


def _get_log_level(key, default="INFO"):
    """Resolve a logging level name, falling back to ``default``."""
    name = (os.getenv(key) or default).strip().upper()
    if not isinstance(logging.getLevelName(name), int):
        return default
    return name


# Grid resolution used when the experiment config does not set one
DEFAULT_GRID_N = _get_config_int("SOURCELENS_GRID_N", 128, minimum=16)
DEFAULT_BOUNDARY_N = _get_config_int("SOURCELENS_BOUNDARY_N", 128, minimum=8)
DEFAULT_DIR_N = _get_config_int("SOURCELENS_DIR_N", 64, minimum=8)
# Rays traced per vectorized batch
DEFAULT_CHUNK_SIZE = _get_config_int("SOURCELENS_CHUNK_SIZE", 2048, minimum=64)
# Ray samples kept in memory between source iterations; above this they are re-traced
RAY_CACHE_LIMIT = _get_config_int("SOURCELENS_RAY_CACHE_LIMIT", 4_000_000, minimum=0)
# Sweeps over at least this many start points log their progress
PROGRESS_MIN_RAYS = _get_config_int("SOURCELENS_PROGRESS_MIN_RAYS", 200_000, minimum=0)
LOG_LEVEL = _get_log_level("SOURCELENS_LOG_LEVEL", "INFO")

GLANCING_MARGIN = 1e-3
# Nominal RK4 step as a fraction of h / max c
RAY_STEP_FRACTION = 0.4
DEGREE_TRIM_RTOL = 1e-14
ADMISSIBILITY_TOL = -1e-12

# ============================================================================
# Solver defaults (shared across CLI and library calls)
# ============================================================================

SOURCE_ITERATION_TOL = 1e-10
SOURCE_ITERATION_MAX = 500
SOURCE_ITERATION_WINDOW = 5
# Harmonics added above m_k + m_f when re-expanding transport solutions
N_MAX_BUFFER = 8
DEGREE_OVERFLOW_TOL = 1e-2
LSQ_REGULARIZATION = 1e-6
LSQ_CONDITION_CAP = 1e12
SOLENOIDAL_BASIS_DEGREE = 6
# Total degree of the h0 and h_perp polynomial spaces in the least-squares Step 1
LSQ_POLYNOMIAL_DEGREE = _get_config_int("SOURCELENS_LSQ_POLYNOMIAL_DEGREE", 10, minimum=1)
CONSISTENCY_TOL = 1e-2

# ============================================================================
# CLI choice tables
# ============================================================================

SPEED_FAMILIES = ("constant", "bump", "gaussian")
BACKEND_CHOICES = ("oracle", "lsq")
CASE_CHOICES = ("1", "2", "iso1", "iso2", "general")
SUBCOMMANDS = (
    "selftest",
    "geometry",
    "forward",
    "measure",
    "reconstruct",
    "gauge-check",
    "descent-probe",
    "render",
)
