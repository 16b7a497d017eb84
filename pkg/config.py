# config.py
"""
Configuration module for SourceLens.

This module provides centralized configuration management, including:
- The default experiment document (every key the schema knows)
- Loading, deep-merging and validating JSON experiment documents
- Environment overrides for output directory and log level
- Builders for DomainSpec, SpeedField and OpticalParams
"""
import copy
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from core.errors import ConfigError
from core.fiber_calculus import OpticalParams
from core.geometry import DomainSpec, SpeedField, make_profile
from utils.config import (
    CONSISTENCY_TOL,
    DEFAULT_BOUNDARY_N,
    DEFAULT_DIR_N,
    DEFAULT_GRID_N,
    DEGREE_OVERFLOW_TOL,
    GLANCING_MARGIN,
    LOG_LEVEL,
    LSQ_CONDITION_CAP,
    LSQ_POLYNOMIAL_DEGREE,
    LSQ_REGULARIZATION,
    N_MAX_BUFFER,
    SOLENOIDAL_BASIS_DEGREE,
    SOURCE_ITERATION_MAX,
    SOURCE_ITERATION_TOL,
    SOURCE_ITERATION_WINDOW,
)
from utils.validation import validate_config


def _get_setting(key: str, default=None):
    """Get a configuration value from the environment.

    Args:
        key: Environment variable name
        default: Default value if unset or empty

    Returns:
        Configuration value or default
    """
    value = os.getenv(key)
    if value:
        return value
    return default


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``; lists are replaced."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _scalar_grid(spec: Dict[str, Any], grid) -> np.ndarray:
    """Evaluate a ``constant`` / ``gaussian`` scalar profile on the grid."""
    if spec["kind"] == "constant":
        return np.full(grid.shape, float(spec.get("value", 1.0)))
    cx, cy = spec.get("center", [0.0, 0.0])
    width = float(spec.get("width", 0.5))
    bump = np.exp(-((grid.x - cx) ** 2 + (grid.y - cy) ** 2) / width ** 2)
    return float(spec.get("base", 0.0)) + float(spec.get("amplitude", 1.0)) * bump


class Config:
    """Central configuration class for SourceLens."""

    PROJECT_ROOT = Path(__file__).parent.absolute()

    OUTPUT_DIR = str(PROJECT_ROOT / "runs")
    LOG_LEVEL = LOG_LEVEL

    DEFAULTS: Dict[str, Any] = {
        "domain": {
            "radius": 1.0,
            "grid_n": DEFAULT_GRID_N,
            "boundary_n": DEFAULT_BOUNDARY_N,
            "dir_n": DEFAULT_DIR_N,
            "glancing_margin": GLANCING_MARGIN,
            "path_cap": 40.0,
        },
        "speed": {"family": "constant", "c0": 1.0},
        "optics": {
            "a": {"kind": "constant", "value": 1.0},
            "k_modes": [
                {"n": 0, "re": 0.5},
                {"n": 1, "re": 0.1},
                {"n": 2, "re": 0.05},
            ],
            "delta": 0.1,
        },
        "source": {
            "case": "1",
            "amplitude": 1.0,
            "perp_amplitude": 0.5,
            "harmonic_amplitude": 0.3,
            "gauge_amplitude": 0.5,
            "degree": 2,
            "perp_constant": 0.0,
        },
        "solver": {
            "tol": SOURCE_ITERATION_TOL,
            "max_iter": SOURCE_ITERATION_MAX,
            "window": SOURCE_ITERATION_WINDOW,
            "n_extra": N_MAX_BUFFER,
            "degree_tol": DEGREE_OVERFLOW_TOL,
            "consistency_tol": CONSISTENCY_TOL,
        },
        "reconstruction": {
            "backend": "oracle",
            "regularization": LSQ_REGULARIZATION,
            "basis_degree": SOLENOIDAL_BASIS_DEGREE,
            "polynomial_degree": LSQ_POLYNOMIAL_DEGREE,
            "condition_cap": LSQ_CONDITION_CAP,
        },
        "probe": {
            "source_degree": 2,
            "kernel_degree": 3,
            "trials": 20,
            "eta": -1.25,
            "levels": 5,
        },
        "seed": 0,
        "output": {"dir": "", "binary": False, "render": False},
    }

    _initialized = False

    @classmethod
    def setup(cls):
        """Initialize configuration from the environment.

        This method should be called once at application startup.
        """
        if cls._initialized:
            return
        cls.OUTPUT_DIR = _get_setting("SOURCELENS_OUTPUT_DIR", str(cls.PROJECT_ROOT / "runs"))
        cls.LOG_LEVEL = _get_setting("SOURCELENS_LOG_LEVEL", LOG_LEVEL).upper()
        cls._initialized = True

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Effective experiment document: defaults, then the file, then overrides.

        Args:
            path: Optional JSON experiment document
            overrides: Nested dict applied last (CLI flags)

        Returns:
            The validated, fully populated document

        Raises:
            ConfigError: unreadable JSON or a schema violation
            OSError: the file cannot be read
        """
        if not cls._initialized:
            cls.setup()
        document: Dict[str, Any] = {}
        if path:
            with open(path, "r", encoding="utf-8") as handle:
                try:
                    document = json.load(handle)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"Invalid JSON: {exc.msg} (line {exc.lineno})") from exc
            if not isinstance(document, dict):
                raise ConfigError("configuration must be a JSON object")
            validate_config(document)
        merged = _deep_merge(cls.DEFAULTS, document)
        if overrides:
            merged = _deep_merge(merged, overrides)
        if not merged["output"]["dir"]:
            merged["output"]["dir"] = cls.OUTPUT_DIR
        return validate_config(merged)

    # ------------------------------------------------------------------
    # Builders
    # ------------------------------------------------------------------

    @staticmethod
    def build_domain(document: Dict[str, Any]) -> DomainSpec:
        return DomainSpec(**document["domain"])

    @classmethod
    def build_speed(cls, document: Dict[str, Any]) -> SpeedField:
        speed_cfg = dict(document["speed"])
        family = speed_cfg.pop("family")
        return SpeedField.from_profile(make_profile(family, **speed_cfg), cls.build_domain(document))

    @staticmethod
    def build_params(document: Dict[str, Any], speed: SpeedField) -> OpticalParams:
        """Optical parameters on the speed's grid; admissibility is checked.

        Kernel entries give ``k_n`` for ``n >= 0`` as ``(re + i im) * profile``;
        ``k_-n`` is the conjugate so the kernel is real.
        """
        optics = document["optics"]
        grid = speed.grid
        mask = grid.mask
        a = np.where(mask, _scalar_grid(optics["a"], grid), 0.0)
        entries = optics.get("k_modes", [])
        order = max((entry["n"] for entry in entries), default=0)
        k_modes = np.zeros((2 * order + 1,) + grid.shape, dtype=complex)
        for entry in entries:
            n = entry["n"]
            profile = _scalar_grid(entry.get("profile", {"kind": "constant", "value": 1.0}), grid)
            value = np.where(mask, complex(entry.get("re", 0.0), entry.get("im", 0.0)) * profile, 0.0)
            if n == 0:
                k_modes[order] = value.real
            else:
                k_modes[order + n] = value
                k_modes[order - n] = np.conj(value)
        params = OpticalParams(a, k_modes, float(optics["delta"]))
        params.check(mask)
        return params

    @staticmethod
    def solver_options(document: Dict[str, Any]) -> Dict[str, Any]:
        """Keyword arguments for TransportSolver."""
        solver = document["solver"]
        return {key: solver[key] for key in ("tol", "max_iter", "window", "n_extra", "degree_tol")}

    @staticmethod
    def lsq_options(document: Dict[str, Any]) -> Dict[str, Any]:
        """Keyword arguments for the least-squares Step 1."""
        recon = document["reconstruction"]
        return {key: recon[key] for key in ("regularization", "basis_degree", "polynomial_degree",
                                             "condition_cap")}
