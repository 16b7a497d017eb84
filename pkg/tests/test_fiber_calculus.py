# tests/test_fiber_calculus.py
"""
Tests for core/fiber_calculus.py: FiberField algebra, angular sampling,
L2 structure, optical parameters, S and the frame operators.
"""

import numpy as np
import pytest

from conftest import make_params
from core.errors import AdmissibilityError, AliasError
from core.fiber_calculus import (
    FiberField,
    OpticalParams,
    accretivity_gap,
    apply_S,
    apply_V,
    apply_X,
    apply_X_minus,
    apply_X_perp,
    apply_X_plus,
    apply_eta,
    decompose,
    inner,
    l2_norm,
    mode_norms,
    numerical_degree,
    q_infty,
    random_field,
    synthesize,
)


def _interior(speed, fraction=0.8):
    grid = speed.grid
    return grid.mask & (grid.r < fraction * grid.radius)


class TestFiberField:
    """Storage, degree and arithmetic."""

    def test_shape_validation(self):
        """An even number of modes is rejected."""
        with pytest.raises(ValueError):
            FiberField(np.zeros((2, 4, 4)))

    def test_from_modes_and_degree(self):
        """Degree ignores zero modes stored beyond it."""
        u = FiberField.from_modes({0: np.ones((4, 4)), 2: np.ones((4, 4))}, (4, 4))
        assert u.order == 2
        assert u.degree == 2
        assert u.padded(5).degree == 2
        assert u.truncated(1).degree == 0

    def test_mode_outside_order_is_zero(self):
        """Reading past the order returns zeros; writing raises."""
        u = FiberField.zeros((3, 3), 1)
        assert not np.any(u.mode(4))
        with pytest.raises(IndexError):
            u.set_mode(2, np.ones((3, 3)))

    def test_arithmetic_pads_orders(self):
        """Sums of different orders use the larger order."""
        a = FiberField.from_modes({0: np.ones((2, 2))}, (2, 2), True)
        b = FiberField.from_modes({1: np.ones((2, 2)), -1: np.ones((2, 2))}, (2, 2), True)
        total = a + b * 2.0 - a
        assert total.order == 1
        assert np.allclose(total.mode(1), 2.0)
        assert not np.any(total.mode(0))
        assert total.real_flag
        assert not (b * 1j).real_flag

    def test_random_real_field_is_conjugate_symmetric(self, unit_speed, rng):
        """Real random fields satisfy u_{-n} = conj(u_n)."""
        u = random_field(unit_speed, 3, rng)
        assert u.is_conjugate_symmetric()


class TestAngularSampling:
    """synthesize / decompose and aliasing."""

    def test_decompose_inverts_synthesize(self, unit_speed, rng):
        """Equispaced samples recover the modes exactly."""
        u = random_field(unit_speed, 2, rng, real=False)
        samples = synthesize(u, 7)
        back = decompose(samples, order=2)
        assert np.allclose(back.modes, u.modes, atol=1e-12)

    def test_real_fields_synthesize_real(self, unit_speed, rng):
        """Real fields give real samples."""
        samples = synthesize(random_field(unit_speed, 2, rng), 9)
        assert np.isrealobj(samples)

    def test_too_few_samples_alias(self, unit_speed, rng):
        """2N + 1 samples are required for degree N."""
        with pytest.raises(AliasError):
            synthesize(random_field(unit_speed, 3, rng), 6)


class TestL2Structure:
    """Parseval norm and inner product."""

    def test_norm_matches_inner(self, gaussian_speed, rng):
        """|u|^2 = <u, u>."""
        u = random_field(gaussian_speed, 2, rng)
        assert l2_norm(u, gaussian_speed) ** 2 == pytest.approx(inner(u, u, gaussian_speed).real)

    def test_modes_are_orthogonal(self, unit_speed, rng):
        """Different modes are orthogonal in L2(SM)."""
        shape = unit_speed.grid.shape
        grid_vals = random_field(unit_speed, 0, rng).mode(0)
        a = FiberField.from_modes({1: grid_vals}, shape)
        b = FiberField.from_modes({2: grid_vals}, shape)
        assert inner(a, b, unit_speed) == 0

    def test_numerical_degree(self, unit_speed, rng):
        """A tiny top mode does not count."""
        u = random_field(unit_speed, 2, rng)
        u.set_mode(2, 1e-9 * u.mode(2))
        u.set_mode(-2, 1e-9 * u.mode(-2))
        assert numerical_degree(u, unit_speed) == 1
        assert mode_norms(u, unit_speed).shape == (5,)


class TestOpticalParams:
    """Admissibility, derived quantities and S."""

    def test_derived_quantities(self, unit_speed, params):
        """m_k, k_0 and sigma_a for the constant fixture."""
        mask = unit_speed.grid.mask
        assert params.m_k == 1
        assert np.allclose(params.k0[mask], 0.5)
        assert np.allclose(params.sigma_a[mask], 0.5)
        assert params.kernel_is_real

    def test_q_infty(self, unit_speed, params):
        """sup a + int |k| = 1 + 2 pi * 0.5 for a nonnegative kernel."""
        assert q_infty(params, unit_speed.grid.mask) == pytest.approx(1.0 + np.pi, rel=1e-10)

    def test_negative_kernel_rejected(self, unit_speed):
        """k_1 larger than k_0 / 2 makes the kernel negative somewhere."""
        with pytest.raises(AdmissibilityError):
            make_params(unit_speed, k_modes=(0.2, 0.3))

    def test_supercritical_rejected(self, unit_speed):
        """a - k_0 below delta is not subcritical."""
        with pytest.raises(AdmissibilityError):
            make_params(unit_speed, a=0.55, k_modes=(0.5,), delta=0.1)

    def test_delta_must_be_positive(self, unit_speed):
        """delta = 0 is rejected."""
        mask = unit_speed.grid.mask
        params = OpticalParams.isotropic(np.where(mask, 1.0, 0.0), 0.5, 0.0)
        with pytest.raises(AdmissibilityError):
            params.check(mask)

    def test_apply_S_multiplies_modes(self, unit_speed, params, rng):
        """(S u)_n = k_n u_n and vanishes above the kernel degree."""
        u = random_field(unit_speed, 3, rng)
        su = apply_S(params, u)
        mask = unit_speed.grid.mask
        assert np.allclose(su.mode(0)[mask], 0.5 * u.mode(0)[mask])
        assert np.allclose(su.mode(-1)[mask], 0.1 * u.mode(-1)[mask])
        assert not np.any(su.mode(2)) and not np.any(su.mode(-3))

    def test_accretivity_gap_nonnegative(self, unit_speed, params, rng):
        """Re((a - S) u, u) >= delta |u|^2 for admissible parameters."""
        for _ in range(5):
            u = random_field(unit_speed, 3, rng, real=False)
            assert accretivity_gap(params, u, unit_speed) >= -1e-12


class TestFrameOperators:
    """X, X_perp, V, eta and the structure equation [X, V] = X_perp."""

    def test_X_of_linear_function(self, unit_speed):
        """X x = cos(theta): modes +-1 equal 1/2 for c = 1."""
        grid = unit_speed.grid
        u = FiberField.from_modes({0: np.where(grid.mask, grid.x, 0.0).astype(complex)}, grid.shape, True)
        xu = apply_X(u, unit_speed)
        inside = _interior(unit_speed)
        assert np.allclose(xu.mode(1)[inside], 0.5, atol=1e-10)
        assert np.allclose(xu.mode(-1)[inside], 0.5, atol=1e-10)
        assert not np.any(xu.mode(0))

    def test_X_perp_of_linear_function(self, unit_speed):
        """X_perp x has modes -i/2 and +i/2."""
        grid = unit_speed.grid
        u = FiberField.from_modes({0: np.where(grid.mask, grid.x, 0.0).astype(complex)}, grid.shape, True)
        perp = apply_X_perp(u, unit_speed)
        inside = _interior(unit_speed)
        assert np.allclose(perp.mode(1)[inside], -0.5j, atol=1e-10)
        assert np.allclose(perp.mode(-1)[inside], 0.5j, atol=1e-10)

    def test_X_preserves_real_fields(self, gaussian_speed, rng):
        """X maps conjugate-symmetric fields to conjugate-symmetric fields."""
        u = random_field(gaussian_speed, 2, rng)
        assert apply_X(u, gaussian_speed).is_conjugate_symmetric(tol=1e-10)

    def test_commutator_X_V(self, gaussian_speed, rng):
        """[X, V] = X_perp holds mode by mode."""
        u = random_field(gaussian_speed, 2, rng, real=False)
        lhs = apply_X(apply_V(u), gaussian_speed) - apply_V(apply_X(u, gaussian_speed))
        rhs = apply_X_perp(u, gaussian_speed)
        assert np.allclose(lhs.modes, rhs.padded(lhs.order).modes, atol=1e-9)

    def test_X_splits_into_raising_and_lowering(self, gaussian_speed, rng):
        """X = X_+ + X_-."""
        u = random_field(gaussian_speed, 2, rng)
        split = apply_X_plus(u, gaussian_speed) + apply_X_minus(u, gaussian_speed)
        assert np.allclose(split.modes, apply_X(u, gaussian_speed).modes)

    def test_eta_twisted_form(self, gaussian_speed, rng):
        """eta_+ on mode k equals c^(1-k) d(c^k u)."""
        grid = gaussian_speed.grid
        u = random_field(gaussian_speed, 0, rng).mode(0)
        c = gaussian_speed.c
        k = 2
        direct = apply_eta("+", k, u, gaussian_speed)
        twisted = c ** (1 - k) * apply_eta("+", 0, c ** k * u, gaussian_speed) / c
        inside = _interior(gaussian_speed, 0.6)
        scale = np.max(np.abs(direct[inside]))
        assert np.max(np.abs(direct[inside] - twisted[inside])) <= 5e-2 * scale

    def test_bad_sign(self, unit_speed):
        """Signs are '+' or '-'."""
        with pytest.raises(ValueError):
            apply_eta("*", 0, np.zeros(unit_speed.grid.shape), unit_speed)
