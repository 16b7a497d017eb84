"""
Utility modules for SourceLens.

This package provides:
- Configuration constants and environment helpers
- Helper functions (progress tracking, seeded RNGs, relative errors)
- Validation of experiment documents against the JSON schema
"""

from utils.config import (
    DEFAULT_GRID_N,
    DEFAULT_BOUNDARY_N,
    DEFAULT_DIR_N,
    DEFAULT_CHUNK_SIZE,
    RAY_CACHE_LIMIT,
    LOG_LEVEL,
    SPEED_FAMILIES,
    BACKEND_CHOICES,
    CASE_CHOICES,
    SUBCOMMANDS,
)
from utils.helpers import (
    ProgressTracker,
    get_rng,
    relative_error,
)
from utils.validation import CONFIG_SCHEMA, validate_config

__all__ = [
    # Config
    'DEFAULT_GRID_N',
    'DEFAULT_BOUNDARY_N',
    'DEFAULT_DIR_N',
    'DEFAULT_CHUNK_SIZE',
    'RAY_CACHE_LIMIT',
    'LOG_LEVEL',
    'SPEED_FAMILIES',
    'BACKEND_CHOICES',
    'CASE_CHOICES',
    'SUBCOMMANDS',

    # Helpers
    'ProgressTracker',
    'get_rng',
    'relative_error',

    # Validation
    'CONFIG_SCHEMA',
    'validate_config',
]
