import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from core.geometry import DomainSpec, SpeedField, make_profile  # noqa: E402
from core.fiber_calculus import OpticalParams  # noqa: E402
from utils.helpers import get_rng  # noqa: E402


def _env(name: str) -> str | None:
    value = os.getenv(name)
    if value is None:
        return None
    value = value.strip()
    return value or None


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-resolution or end-to-end runs (deselect with -m 'not slow')")


def pytest_collection_modifyitems(config, items):
    """Skip slow tests unless SOURCELENS_RUN_SLOW is set or -m selects them."""
    if _env("SOURCELENS_RUN_SLOW") or config.getoption("-m"):
        return
    skip_slow = pytest.mark.skip(reason="slow test (set SOURCELENS_RUN_SLOW=1 to run)")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_speed(family: str = "constant", radius: float = 1.0, grid_n: int = 24,
               boundary_n: int = 64, dir_n: int = 32, **params) -> SpeedField:
    params = params or {"c0": 1.0}
    domain = DomainSpec(radius=radius, grid_n=grid_n, boundary_n=boundary_n, dir_n=dir_n)
    return SpeedField.from_profile(make_profile(family, **params), domain)


def make_params(speed: SpeedField, a: float = 1.0, k_modes=(0.5, 0.1), delta: float = 0.1) -> OpticalParams:
    """Constant parameters with real kernel modes ``k_0, k_1, ...`` (``k_-n = k_n``)."""
    mask = speed.grid.mask
    order = len(k_modes) - 1
    modes = np.zeros((2 * order + 1,) + mask.shape, dtype=complex)
    for n, value in enumerate(k_modes):
        modes[order + n] = value
        modes[order - n] = value
    params = OpticalParams(np.where(mask, a, 0.0), np.where(mask, modes, 0.0), delta)
    params.check(mask)
    return params


@pytest.fixture
def rng():
    """Seeded generator; every test sees the same stream."""
    return get_rng(1234)


@pytest.fixture(scope="session")
def unit_speed():
    """Unit disk, c = 1, coarse grid."""
    return make_speed()


@pytest.fixture(scope="session")
def gaussian_speed():
    """Unit disk with a mild Gaussian speed (simple)."""
    return make_speed("gaussian", c0=1.0, alpha=0.2)


@pytest.fixture(scope="session")
def params(unit_speed):
    """Admissible anisotropic parameters (kernel degree 1)."""
    return make_params(unit_speed)


@pytest.fixture(scope="session")
def iso_params(unit_speed):
    """Admissible isotropic parameters."""
    return make_params(unit_speed, k_modes=(0.5,))


@pytest.fixture
def out_dir(tmp_path):
    """Fresh output directory for CLI and storage tests."""
    path = tmp_path / "run"
    path.mkdir()
    return path
