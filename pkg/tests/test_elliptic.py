# tests/test_elliptic.py
"""
Tests for core/elliptic.py on polynomial oracles and manufactured solutions:
Dirichlet and Neumann Poisson problems, the eta Dirichlet problem and the
two decompositions.
"""

import numpy as np
import pytest

from conftest import make_speed
from core.elliptic import (
    hodge_decompose,
    solenoidal_project,
    solve_dbar_dirichlet,
    solve_poisson_dirichlet,
    solve_poisson_neumann,
)
from core.errors import CompatibilityWarning
from core.fiber_calculus import FiberField, apply_X, apply_X_plus, apply_eta, l2_norm


def _masked(speed, values):
    return np.where(speed.grid.mask, values, 0.0)


def _bubble(speed):
    """1 - r^2, zero on the unit circle."""
    grid = speed.grid
    return _masked(speed, 1.0 - grid.r ** 2)


class TestPoissonDirichlet:
    """Delta_g p = rhs with Dirichlet data."""

    def test_quadratic_bubble(self, unit_speed):
        """Delta (1 - r^2) = -4 is reproduced exactly."""
        grid = unit_speed.grid
        p = solve_poisson_dirichlet(_masked(unit_speed, -4.0), unit_speed)
        assert np.allclose(p[grid.mask], _bubble(unit_speed)[grid.mask], atol=1e-8)
        assert not np.any(p[~grid.mask])

    def test_conformal_factor(self, gaussian_speed):
        """Delta_g = c^2 Delta: rhs = -4 c^2 gives the same bubble."""
        grid = gaussian_speed.grid
        rhs = _masked(gaussian_speed, -4.0 * gaussian_speed.c ** 2)
        p = solve_poisson_dirichlet(rhs, gaussian_speed)
        assert np.allclose(p[grid.mask], _bubble(gaussian_speed)[grid.mask], atol=1e-8)

    def test_harmonic_boundary_data(self, unit_speed):
        """Zero right-hand side with boundary data x returns x."""
        grid = unit_speed.grid
        p = solve_poisson_dirichlet(np.zeros(grid.shape), unit_speed, boundary=lambda x, y: x)
        assert np.allclose(p[grid.mask].real, grid.x[grid.mask], atol=1e-8)

    def test_complex_right_hand_side(self, unit_speed):
        """Real and imaginary parts are solved independently."""
        grid = unit_speed.grid
        p = solve_poisson_dirichlet(_masked(unit_speed, -4.0 + 8.0j), unit_speed)
        assert np.allclose(p[grid.mask].imag, -2.0 * _bubble(unit_speed)[grid.mask], atol=1e-8)


class TestPoissonNeumann:
    """g-normal Neumann data with the zero-mean gauge."""

    def test_linear_function(self, unit_speed):
        """c d_r p = cos(phi) with Delta p = 0 gives p = x."""
        grid = unit_speed.grid
        p = solve_poisson_neumann(np.zeros(grid.shape), np.cos, unit_speed)
        assert np.isrealobj(p)
        assert np.allclose(p[grid.mask], grid.x[grid.mask], atol=1e-8)

    def test_sampled_boundary_data(self, unit_speed):
        """Sampled data behaves like the callable."""
        grid = unit_speed.grid
        phi = 2.0 * np.pi * np.arange(64) / 64
        p = solve_poisson_neumann(np.zeros(grid.shape), np.sin(phi), unit_speed)
        assert np.allclose(p[grid.mask], grid.y[grid.mask], atol=1e-8)

    def test_incompatible_data_warns(self, unit_speed):
        """Unit outward flux with zero source cannot be matched."""
        grid = unit_speed.grid
        with pytest.warns(CompatibilityWarning):
            solve_poisson_neumann(np.zeros(grid.shape), lambda phi: np.ones_like(phi), unit_speed)

    def test_zero_mean_gauge(self, unit_speed):
        """The solution has zero g-mean."""
        grid = unit_speed.grid
        p = solve_poisson_neumann(np.zeros(grid.shape), lambda phi: np.cos(2 * phi), unit_speed)
        assert abs(grid.integrate(unit_speed.nodes(p))) <= 1e-8


class TestDbarDirichlet:
    """eta_+/- p = h with p = 0 on the circle."""

    def test_recovers_bubble(self, unit_speed):
        """d(1 - r^2) = -conj(z) on mode 0."""
        grid = unit_speed.grid
        h = _masked(unit_speed, -(grid.x - 1j * grid.y))
        p, residual = solve_dbar_dirichlet(0, h, unit_speed, "+")
        assert np.allclose(p[grid.mask], _bubble(unit_speed)[grid.mask], atol=1e-8)
        assert residual < 1e-6

    def test_lowering_sign(self, unit_speed):
        """dbar(1 - r^2) = -z on mode 0."""
        grid = unit_speed.grid
        h = _masked(unit_speed, -(grid.x + 1j * grid.y))
        p, residual = solve_dbar_dirichlet(0, h, unit_speed, "-")
        assert np.allclose(p[grid.mask], _bubble(unit_speed)[grid.mask], atol=1e-8)
        assert residual < 1e-6

    def test_zero_data(self, unit_speed):
        """h = 0 returns p = 0 with zero residual."""
        p, residual = solve_dbar_dirichlet(2, np.zeros(unit_speed.grid.shape), unit_speed)
        assert residual == 0.0
        assert not np.any(p)

    def test_out_of_range_data_is_flagged(self, unit_speed):
        """d p = 1 has no zero-boundary solution."""
        h = _masked(unit_speed, np.ones(unit_speed.grid.shape))
        _, residual = solve_dbar_dirichlet(0, h, unit_speed, "+")
        assert residual > 0.5


class TestHodgeDecomposition:
    """Degree-one fields split as X f0 + X_perp f_perp + omega."""

    def test_exact_field(self, unit_speed):
        """f1 = X(1 - r^2) has no harmonic part."""
        grid = unit_speed.grid
        bubble = FiberField.from_modes({0: _bubble(unit_speed)}, grid.shape, True)
        f1 = apply_X(bubble, unit_speed, zero_boundary=True)
        parts = hodge_decompose(f1, unit_speed)
        assert np.allclose(parts.f0[grid.mask], _bubble(unit_speed)[grid.mask], atol=1e-8)
        assert np.allclose(parts.f_perp[grid.mask], 0.0, atol=1e-8)
        assert l2_norm(parts.omega, unit_speed) <= 1e-6 * l2_norm(f1, unit_speed)

    def test_harmonic_field(self, unit_speed):
        """Holomorphic mode 1 lies in the kernel of eta_-."""
        grid = unit_speed.grid
        z = _masked(unit_speed, grid.x + 1j * grid.y)
        f1 = FiberField.from_modes({1: z, -1: np.conj(z)}, grid.shape, True)
        parts = hodge_decompose(f1, unit_speed)
        assert np.allclose(parts.f0, 0.0, atol=1e-10)
        assert np.allclose(parts.f_perp, 0.0, atol=1e-10)
        assert parts.kernel_residual <= 1e-8
        assert parts.recomposition_error <= 1e-12

    def test_zero_field(self, unit_speed):
        """An empty degree-one part returns zeros."""
        parts = hodge_decompose(FiberField.zeros(unit_speed.grid.shape, 1, True), unit_speed)
        assert parts.kernel_residual == 0.0
        assert not np.any(parts.f0)


class TestSolenoidalProjection:
    """u = X_+ v + g with X_- g = 0."""

    def test_degree_one(self, unit_speed):
        """X_+ of a zero-boundary scalar projects back onto that scalar."""
        grid = unit_speed.grid
        v = FiberField.from_modes({0: _bubble(unit_speed)}, grid.shape, True)
        u = apply_X_plus(v, unit_speed, zero_boundary=True)
        parts = solenoidal_project(u, 1, unit_speed)
        assert np.allclose(parts.v.mode(0)[grid.mask], _bubble(unit_speed)[grid.mask], atol=1e-8)
        assert l2_norm(parts.g, unit_speed) <= 1e-6 * l2_norm(u, unit_speed)

    def test_degree_two(self, unit_speed):
        """The twisted solve recovers v on modes +-1."""
        grid = unit_speed.grid
        bubble = _bubble(unit_speed).astype(complex)
        v = FiberField.from_modes({1: bubble, -1: bubble}, grid.shape, True)
        u = apply_X_plus(v, unit_speed, zero_boundary=True)
        parts = solenoidal_project(u, 2, unit_speed)
        assert np.allclose(parts.v.mode(1)[grid.mask], bubble[grid.mask], atol=1e-6)
        assert l2_norm(parts.g, unit_speed) <= 1e-4 * l2_norm(u, unit_speed)

    def test_k_must_be_positive(self, unit_speed):
        """Mode 0 has no solenoidal split."""
        with pytest.raises(ValueError):
            solenoidal_project(FiberField.zeros(unit_speed.grid.shape, 1), 0, unit_speed)


def _weighted_error(speed, estimate, exact, mean_free=False):
    grid = speed.grid
    weights = grid.node_weights
    diff = speed.nodes(estimate) - speed.nodes(exact)
    if mean_free:
        diff = diff - np.sum(diff * weights) / np.sum(weights)
    return float(np.sqrt(np.sum(np.abs(diff) ** 2 * weights)))


class TestSecondOrderConvergence:
    """Manufactured non-polynomial solutions on grids 32 and 64."""

    def _errors(self, solve):
        return [solve(make_speed(grid_n=n)) for n in (32, 64)]

    def test_dirichlet(self):
        """(1 - r^2) e^x is recovered with error ratio near 1/4."""
        def solve(speed):
            grid = speed.grid
            exact = _masked(speed, (1.0 - grid.r ** 2) * np.exp(grid.x))
            rhs = _masked(speed, np.exp(grid.x) * (-3.0 - grid.r ** 2 - 4.0 * grid.x))
            return _weighted_error(speed, solve_poisson_dirichlet(rhs, speed), exact)

        coarse, fine = self._errors(solve)
        assert fine <= 0.4 * coarse
        assert fine <= 1e-3

    def test_neumann(self):
        """e^x with its radial derivative as data, compared up to the mean."""
        def solve(speed):
            grid = speed.grid
            exact = _masked(speed, np.exp(grid.x))
            p = solve_poisson_neumann(exact, lambda phi: np.cos(phi) * np.exp(np.cos(phi)), speed)
            return _weighted_error(speed, p, exact, mean_free=True)

        coarse, fine = self._errors(solve)
        assert fine <= 0.5 * coarse
        assert fine <= 5e-3

    def test_dbar_residual_halves(self):
        """eta_+ of a zero-boundary mode-0 grid comes back with an O(h^2) residual."""
        def solve(speed):
            grid = speed.grid
            exact = _masked(speed, (1.0 - grid.r ** 2) * np.exp(grid.x)).astype(complex)
            h = apply_eta("+", 0, exact, speed, zero_boundary=True)
            _, residual = solve_dbar_dirichlet(0, h, speed, "+")
            return residual

        coarse, fine = self._errors(solve)
        assert fine <= 0.6 * coarse
        assert fine <= 5e-3
