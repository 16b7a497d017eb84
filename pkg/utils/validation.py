"""Validation of experiment configuration documents"""
from typing import Any, Dict

import jsonschema

from core.errors import ConfigError

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NONNEGATIVE = {"type": "number", "minimum": 0}
_EVEN_INT = {"type": "integer", "minimum": 4, "multipleOf": 2}

# Scalar grids given as a small expression family
_SCALAR_PROFILE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["constant", "gaussian"]},
        "value": {"type": "number"},
        "base": {"type": "number"},
        "amplitude": {"type": "number"},
        "width": _POSITIVE,
        "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_K_MODE = {
    "type": "object",
    "properties": {
        "n": {"type": "integer", "minimum": 0},
        "re": {"type": "number"},
        "im": {"type": "number"},
        "profile": _SCALAR_PROFILE,
    },
    "required": ["n"],
    "additionalProperties": False,
}

CONFIG_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "SourceLens experiment",
    "type": "object",
    "properties": {
        "domain": {
            "type": "object",
            "properties": {
                "radius": _POSITIVE,
                "grid_n": {"type": "integer", "minimum": 16},
                "boundary_n": _EVEN_INT,
                "dir_n": _EVEN_INT,
                "glancing_margin": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "path_cap": _POSITIVE,
            },
            "additionalProperties": False,
        },
        "speed": {
            "type": "object",
            "properties": {
                "family": {"enum": ["constant", "bump", "gaussian"]},
                "c0": _POSITIVE,
                "epsilon": {"type": "number", "exclusiveMinimum": -1},
                "width": _POSITIVE,
                "alpha": {"type": "number"},
            },
            "required": ["family"],
            "additionalProperties": False,
        },
        "optics": {
            "type": "object",
            "properties": {
                "a": _SCALAR_PROFILE,
                "k_modes": {"type": "array", "items": _K_MODE},
                "delta": _POSITIVE,
            },
            "additionalProperties": False,
        },
        "source": {
            "type": "object",
            "properties": {
                "case": {"enum": ["1", "2", "iso1", "iso2", "general"]},
                "amplitude": _NONNEGATIVE,
                "perp_amplitude": _NONNEGATIVE,
                "harmonic_amplitude": _NONNEGATIVE,
                "gauge_amplitude": _NONNEGATIVE,
                "degree": {"type": "integer", "minimum": 0, "maximum": 6},
                "perp_constant": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "tol": _POSITIVE,
                "max_iter": {"type": "integer", "minimum": 1},
                "window": {"type": "integer", "minimum": 1},
                "n_extra": {"type": "integer", "minimum": 0},
                "degree_tol": _POSITIVE,
                "consistency_tol": _POSITIVE,
            },
            "additionalProperties": False,
        },
        "reconstruction": {
            "type": "object",
            "properties": {
                "backend": {"enum": ["oracle", "lsq"]},
                "regularization": _NONNEGATIVE,
                "basis_degree": {"type": "integer", "minimum": 0, "maximum": 16},
                "polynomial_degree": {"type": "integer", "minimum": 1, "maximum": 20},
                "condition_cap": _POSITIVE,
            },
            "additionalProperties": False,
        },
        "probe": {
            "type": "object",
            "properties": {
                "source_degree": {"type": "integer", "minimum": 0, "maximum": 6},
                "kernel_degree": {"type": "integer", "minimum": 0, "maximum": 6},
                "trials": {"type": "integer", "minimum": 1},
                "eta": {"type": "number", "exclusiveMinimum": -1.5, "maximum": 0},
                "levels": {"type": "integer", "minimum": 1, "maximum": 12},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {
            "type": "object",
            "properties": {
                "dir": {"type": "string"},
                "binary": {"type": "boolean"},
                "render": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


def _format_path(error) -> str:
    parts = [str(p) for p in error.absolute_path]
    return "/".join(parts) if parts else "<root>"


def validate_config(document: Dict[str, Any]) -> Dict[str, Any]:
    """Validate an experiment document against ``CONFIG_SCHEMA``.

    Args:
        document: Parsed JSON configuration

    Returns:
        The same document, for chaining

    Raises:
        ConfigError: naming the schema path of the first violation
    """
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        error = jsonschema.exceptions.best_match(errors)
        raise ConfigError(f"Invalid configuration: {error.message}", path=_format_path(error))
    return document
