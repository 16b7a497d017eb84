# tests/test_reconstruction.py
"""
Tests for core/reconstruction.py: gauge tools, representatives, the
oracle pipeline wiring and the degree descent of source iterates. Full round trips at
suite resolution are marked slow.
"""

import numpy as np
import pandas as pd
import pytest

from conftest import make_params, make_speed
from core.errors import AdmissibilityError, ConsistencyFailure
from core.fiber_calculus import FiberField, OpticalParams, apply_S, apply_X_perp, l2_norm, random_field
from core.invariant_suites import (
    REFINEMENT_RATIO,
    SuiteContext,
    halves_under_refinement,
    random_admissible_params,
    random_polynomial,
    run_suites,
)
from core.reconstruction import (
    DescentReport,
    GaugeRepresentative,
    case_harness,
    degree_descent_probe,
    gauge_generate,
    gauge_theorem_check,
    gauge_verify,
    isotropic_case1,
    isotropic_harness,
    iso2_elimination_identity,
    polynomial_basis,
    reconstruct,
    recover_representative,
    solenoidal_basis,
    step2_triangular,
    synthetic_gauge_harness,
)
from core.transport import TransportSolver
from utils.config import CONSISTENCY_TOL, SOLENOIDAL_BASIS_DEGREE
from utils.helpers import get_rng, relative_error


def _pure_absorption(speed, a=1.0):
    grid = speed.grid
    return OpticalParams.isotropic(np.where(grid.mask, a, 0.0), 0.0, delta=0.5)


class TestGaugeRepresentative:
    """Containers for h = h0 + X_perp h_perp + sum h_k."""

    def test_degree(self, unit_speed):
        """Degree follows the highest nonzero block."""
        shape = unit_speed.grid.shape
        rep = GaugeRepresentative.zeros(shape)
        assert rep.degree == 0
        rep.h_perp = np.ones(shape, dtype=complex)
        assert rep.degree == 1
        rep.h_k[3] = (np.ones(shape, dtype=complex), np.ones(shape, dtype=complex))
        assert rep.degree == 3

    def test_to_field_places_blocks(self, unit_speed):
        """h_k lands on modes +-k."""
        grid = unit_speed.grid
        z = np.where(grid.mask, grid.x + 1j * grid.y, 0.0)
        rep = GaugeRepresentative(np.zeros(grid.shape, dtype=complex), np.zeros(grid.shape, dtype=complex),
                                  {2: (z, np.conj(z))})
        field = rep.to_field(unit_speed)
        assert field.order == 2
        assert np.allclose(field.mode(2), z)
        assert np.allclose(field.mode(-2), np.conj(z))
        assert not np.any(field.mode(0))

    def test_holomorphic_blocks_have_zero_kernel_residual(self, unit_speed):
        """c^k z lies in H_1 for c = 1."""
        grid = unit_speed.grid
        z = np.where(grid.mask, grid.x + 1j * grid.y, 0.0)
        rep = GaugeRepresentative(np.zeros(grid.shape, dtype=complex), np.zeros(grid.shape, dtype=complex),
                                  {1: (z, np.conj(z))})
        assert rep.kernel_residuals(unit_speed)[1] <= 1e-10

    def test_solenoidal_basis_is_orthonormal(self, gaussian_speed):
        """Columns are orthonormal under c^-2 dx."""
        grid = gaussian_speed.grid
        weights = grid.node_weights / gaussian_speed.nodes(gaussian_speed.c) ** 2
        plus, minus = solenoidal_basis(2, gaussian_speed, degree=3)
        for basis in (plus, minus):
            gram = basis.conj().T @ (weights[:, None] * basis)
            assert np.allclose(gram, np.eye(basis.shape[1]), atol=1e-10)


class TestGaugeTools:
    """Pure-gauge sources and their invisibility."""

    def test_zero_source(self, unit_speed, params):
        """|M 0| / |0| is defined as 0."""
        assert gauge_verify(FiberField.zeros(unit_speed.grid.shape, 1, True), params, unit_speed) == 0.0

    def test_gauge_source_is_invisible(self, unit_speed, params, rng):
        """(X + a - S) p with p = 0 on the boundary produces (nearly) no data."""
        p = random_field(unit_speed, 0, rng, zero_boundary=True)
        f = gauge_generate(p, params, unit_speed)
        assert gauge_verify(f, params, unit_speed) <= 5e-2

    def test_gauge_source_differs_from_visible_source(self, unit_speed, params, rng):
        """A generic source is visible."""
        f = random_field(unit_speed, 1, rng)
        assert gauge_verify(f, params, unit_speed) > 0.1

    def test_isotropic_gauge_theorem(self, unit_speed, iso_params, rng):
        """For isotropic kernels the gauge is (X + sigma_a) p0."""
        p0 = random_polynomial(unit_speed, rng, zero_boundary=True)
        assert gauge_theorem_check(p0, iso_params, unit_speed) <= 1e-12

    def test_elimination_identity(self):
        """The corrected elimination is exact; the naive division is not."""
        identity = iso2_elimination_identity(samples=25, seed=3)
        assert identity["corrected"] is True
        assert identity["printed"] is False


class TestPipelineWiring:
    """Oracle runs whose answers are exact by construction."""

    def test_vector_field_without_scattering_or_gauge(self, unit_speed, rng):
        """With k = 0 and p = 0 the Case 2 finisher returns the source itself."""
        grid = unit_speed.grid
        params = _pure_absorption(unit_speed)
        f1 = random_field(unit_speed, 1, rng)
        f1.set_mode(0, np.zeros(grid.shape, dtype=complex))
        data = TransportSolver(unit_speed, params).ray_transform(f1)
        result = reconstruct(data, params, unit_speed, "2", backend="oracle", truth=f1)
        for n in (1, -1):
            assert np.allclose(result.source.mode(n)[grid.mask], f1.mode(n)[grid.mask], atol=1e-10)
        assert np.allclose(result.parts["p0"], 0.0)

    def test_general_oracle_reproduces_data(self, unit_speed, params, rng):
        """f_tilde - S w measures to the same boundary data."""
        grid = unit_speed.grid
        c = unit_speed.c
        z = np.where(grid.mask, c * (grid.x + 1j * grid.y), 0.0)
        h = GaugeRepresentative(
            random_polynomial(unit_speed, rng).astype(complex),
            random_polynomial(unit_speed, rng, zero_boundary=True).astype(complex),
            {1: (0.5 * z, 0.5 * np.conj(z))},
        )
        p = FiberField.zeros(grid.shape, 0, True)
        solver = TransportSolver(unit_speed, params)
        harness = synthetic_gauge_harness(p, h, params, unit_speed, solver=solver)
        result = reconstruct(harness.data, params, unit_speed, "general", backend="oracle",
                             truth=harness.truth, solver=solver)
        remeasured = solver.measure(result.source, harness.data)
        misfit = np.linalg.norm(remeasured.value - harness.data.value) / np.linalg.norm(harness.data.value)
        assert misfit <= 1e-2

    def test_case_harness_without_gauge(self, unit_speed, params, rng):
        """With p = 0 the fixture data is the measurement and f_tilde = f + S u."""
        grid = unit_speed.grid
        solver = TransportSolver(unit_speed, params)
        f_true = random_field(unit_speed, 1, rng)
        harness = case_harness(f_true, FiberField.zeros(grid.shape, 0, True), params, unit_speed, solver)
        assert np.allclose(harness.data.value, solver.measure(f_true).value)
        expected = f_true + apply_S(params, harness.u)
        for n in (-1, 0, 1):
            assert np.allclose(harness.truth.mode(n), expected.mode(n))

    def test_step2_degree_one_has_no_descent(self, unit_speed, params, rng):
        """For m = 1 Step 2 only transports f_tilde; no p modes are solved."""
        solver = TransportSolver(unit_speed, params)
        f_tilde = random_field(unit_speed, 1, rng)
        state = step2_triangular(f_tilde, params, unit_speed, 1, solver=solver)
        assert state.p_modes == {}
        assert state.residuals == {}
        assert np.allclose(state.w.modes, solver.free_transport(f_tilde).modes)

    def test_oracle_needs_truth(self, unit_speed, params):
        """The oracle backend has nothing to return without a harness."""
        fan = TransportSolver(unit_speed, params).fan
        with pytest.raises(ValueError):
            reconstruct(fan, params, unit_speed, "1", backend="oracle")

    def test_unknown_backend(self, unit_speed, params):
        """Only oracle and lsq exist."""
        fan = TransportSolver(unit_speed, params).fan
        with pytest.raises(ValueError):
            recover_representative(fan, params, unit_speed, backend="magic")

    def test_unknown_case(self, unit_speed, params):
        """Cases are 1, 2, iso1, iso2 and general."""
        grid = unit_speed.grid
        fan = TransportSolver(unit_speed, params).fan
        truth = FiberField.from_modes({0: grid.mask.astype(complex)}, grid.shape, True)
        with pytest.raises(ValueError):
            reconstruct(fan, params, unit_speed, "3", backend="oracle", truth=truth)

    def test_isotropic_cases_need_isotropic_kernel(self, unit_speed, params):
        """An anisotropic kernel is rejected before any solve."""
        fan = TransportSolver(unit_speed, params).fan
        with pytest.raises(AdmissibilityError):
            isotropic_case1(fan, params, unit_speed)

    def test_unknown_isotropic_harness(self, unit_speed, iso_params):
        """Only iso1 and iso2 harnesses exist."""
        with pytest.raises(ValueError):
            isotropic_harness("iso3", {}, iso_params, unit_speed)


class TestDegreeDescent:
    """Numerical degree of the source iterates for pure-gauge sources."""

    def test_injective_regime(self, unit_speed, params):
        """m = 0 has no gauge and no stages."""
        report = degree_descent_probe(params, unit_speed, m=0)
        assert report.regime == "injective"
        assert report.stages.empty and report.bounds.empty
        assert report.terminal_degree is None
        assert report.monotone

    def test_induction_bounds(self, unit_speed, rng):
        """Kernel degree 3 and m = 2 bound the degree by 2, then 1."""
        params = random_admissible_params(unit_speed, rng, kernel_degree=3)
        report = degree_descent_probe(params, unit_speed, m=2, rng=rng)
        assert report.regime == "gauge"
        assert list(report.bounds["degree_bound"]) == [2, 1]
        assert list(report.bounds["rhs_degree_bound"]) == [3, 2]
        assert report.kernel_degree == 3

    def test_iterates_descend_to_potential_degree(self, unit_speed, params, rng):
        """Early iterates carry higher modes that die out until only p is left."""
        report = degree_descent_probe(params, unit_speed, m=1, rng=rng)
        degrees = report.degrees
        assert len(degrees) >= 3
        assert degrees[0] > report.terminal_degree
        assert len(set(degrees.tolist())) > 1
        assert report.monotone
        assert report.terminal_degree == 0
        assert report.within_bound
        assert list(report.stages["stage"]) == list(range(1, len(degrees) + 1))

    def test_rhs_degree_within_induction_bound(self, unit_speed, params, rng):
        """S u_j + f never exceeds max(m, kernel degree), whatever the degree of u_j."""
        report = degree_descent_probe(params, unit_speed, m=1, rng=rng)
        rhs = report.stages["rhs_numerical_degree"].to_numpy()
        assert rhs[0] == 1
        assert np.all(rhs <= report.bounds["rhs_degree_bound"].iloc[0])

    def test_without_scattering_one_iterate(self, unit_speed, rng):
        """k = 0 reaches u = p after a single sweep."""
        report = degree_descent_probe(_pure_absorption(unit_speed), unit_speed, m=1, rng=rng)
        assert len(report.stages) == 1
        assert report.terminal_degree == 0

    def test_monotone_flags_a_rising_degree(self):
        """A degree that goes up between iterates is not monotone."""
        stages = pd.DataFrame({"stage": [1, 2, 3], "update": [1.0, 0.1, 0.01],
                               "rhs_numerical_degree": [1, 1, 1], "numerical_degree": [2, 3, 0]})
        report = DescentReport("gauge", 1, 1, stages, pd.DataFrame({"stage": [0], "rhs_degree_bound": [1],
                                                                     "degree_bound": [0]}))
        assert not report.monotone
        assert report.terminal_degree == 0


@pytest.fixture(scope="module")
def fine_speed():
    """Unit disk, c = 1, grid 32."""
    return make_speed(grid_n=32)


def _smooth_representative(speed, rng, blocks=(1,)):
    grid = speed.grid
    z = np.where(grid.mask, (grid.x + 1j * grid.y) / grid.radius, 0.0)
    h_k = {k: (0.5 * speed.c ** k * z, 0.5 * speed.c ** k * np.conj(z)) for k in blocks}
    return GaugeRepresentative(
        random_polynomial(speed, rng).astype(complex),
        random_polynomial(speed, rng, zero_boundary=True).astype(complex),
        h_k,
        True,
    )


def _mode_error(speed, estimate, exact, modes):
    w = speed.grid.node_weights / speed.nodes(speed.c) ** 2
    est = np.concatenate([speed.nodes(estimate.padded(max(modes)).mode(n)) for n in modes])
    ref = np.concatenate([speed.nodes(exact.padded(max(modes)).mode(n)) for n in modes])
    return relative_error(est, ref, np.concatenate([w] * len(modes)))


class TestLeastSquaresStep:
    """Step 1 by damped least squares over the polynomial and H_k bases."""

    def test_smooth_representative(self, fine_speed, rng):
        """Harness data with m = 1, c = 1, a = 0.4 returns h within 5%."""
        params = make_params(fine_speed, a=0.4, k_modes=(0.2, 0.05))
        solver = TransportSolver(fine_speed, params)
        h = _smooth_representative(fine_speed, rng)
        p = random_field(fine_speed, 0, rng, zero_boundary=True, scale=0.5)
        harness = synthetic_gauge_harness(p, h, params, fine_speed, solver=solver)
        rep = recover_representative(harness.data, params, fine_speed, m=1, solver=solver)
        truth = h.to_field(fine_speed)
        error = l2_norm(rep.to_field(fine_speed) - truth, fine_speed) / l2_norm(truth, fine_speed)
        assert error <= 5e-2
        assert rep.real_flag

    def test_zero_data(self, unit_speed, params):
        """Zero data gives the zero representative."""
        fan = TransportSolver(unit_speed, params).fan
        rep = recover_representative(fan, params, unit_speed, m=1)
        assert not np.any(rep.h0) and not np.any(rep.h_perp)
        assert all(not np.any(hp) and not np.any(hm) for hp, hm in rep.h_k.values())

    def test_unknowns_do_not_grow_with_the_grid(self, unit_speed, params, fine_speed):
        """Only basis coefficients are solved for, never one unknown per node."""
        fine_params = make_params(fine_speed)
        coarse = recover_representative(TransportSolver(unit_speed, params).fan, params, unit_speed,
                                        m=2, polynomial_degree=6)
        fine = recover_representative(TransportSolver(fine_speed, fine_params).fan, fine_params, fine_speed,
                                      m=2, polynomial_degree=6)
        bound = 2 * 28 + 2 * 2 * (SOLENOIDAL_BASIS_DEGREE + 1)
        assert coarse.diagnostics["unknowns"] <= bound
        assert fine.diagnostics["unknowns"] == coarse.diagnostics["unknowns"]
        assert fine.diagnostics["unknowns"] < fine_speed.grid.n_nodes

    def test_polynomial_basis(self, gaussian_speed):
        """Columns are orthonormal under c^-2 dx and vanish on the circle when asked."""
        grid = gaussian_speed.grid
        weights = grid.node_weights / gaussian_speed.nodes(gaussian_speed.c) ** 2
        basis = polynomial_basis(gaussian_speed, 4, zero_boundary=True)
        assert basis.shape[1] == 15
        assert np.allclose(basis.conj().T @ (weights[:, None] * basis), np.eye(15), atol=1e-10)
        X, Y = grid.node_x / grid.radius, grid.node_y / grid.radius
        monomials = np.stack([X ** i * Y ** (t - i) for t in range(5) for i in range(t + 1)], axis=1)
        quotient = basis / (1.0 - X ** 2 - Y ** 2)[:, None]
        coef = np.linalg.lstsq(monomials, quotient, rcond=None)[0]
        assert np.allclose(monomials @ coef, quotient, atol=1e-8)


class TestConsistentData:
    """Harness consistency, Step 2 recovery and invariances of the finishers."""

    def test_harness_matches_measurement(self, unit_speed, params, rng):
        """M f equals I_a[F] for the synthetic gauge harness."""
        solver = TransportSolver(unit_speed, params)
        h = _smooth_representative(unit_speed, rng)
        p = random_field(unit_speed, 0, rng, zero_boundary=True)
        harness = synthetic_gauge_harness(p, h, params, unit_speed, solver=solver)
        measured = solver.measure(harness.f)
        gap = np.linalg.norm(measured.value - harness.data.value) / np.linalg.norm(harness.data.value)
        assert gap <= 1e-6

    def test_step2_recovers_potential(self, fine_speed, rng):
        """Kernel degree 2 and m = 2: p_{+-1} come back within 1%."""
        params = make_params(fine_speed, k_modes=(0.5, 0.1, 0.05))
        solver = TransportSolver(fine_speed, params)
        f_true = random_field(fine_speed, 1, rng)
        p = random_field(fine_speed, 1, rng, zero_boundary=True, scale=0.5)
        harness = case_harness(f_true, p, params, fine_speed, solver)
        state = step2_triangular(harness.truth, params, fine_speed, 2, solver=solver, consistency_tol=5e-2)
        w = fine_speed.grid.node_weights
        for n in (1, -1):
            assert relative_error(fine_speed.nodes(state.p_modes[n]), fine_speed.nodes(p.mode(n)), w) <= 1e-2
        assert max(state.residuals.values()) <= 5e-2

    def test_inconsistent_data_raises(self, fine_speed, rng):
        """A 10% H_2 component outside the range of eta_+ fails the consistency check."""
        params = make_params(fine_speed, k_modes=(0.5, 0.1, 0.05))
        solver = TransportSolver(fine_speed, params)
        grid = fine_speed.grid
        f_true = random_field(fine_speed, 1, rng)
        p = random_field(fine_speed, 1, rng, zero_boundary=True, scale=0.5)
        f_tilde = case_harness(f_true, p, params, fine_speed, solver).truth
        z = np.where(grid.mask, grid.x + 1j * grid.y, 0.0)
        mode = f_tilde.mode(2)
        bump = 0.1 * np.linalg.norm(fine_speed.nodes(mode)) / np.linalg.norm(fine_speed.nodes(z)) * z
        f_tilde.set_mode(2, mode + bump)
        with pytest.raises(ConsistencyFailure):
            step2_triangular(f_tilde, params, fine_speed, 2, solver=solver)
        state = step2_triangular(f_tilde, params, fine_speed, 2, solver=solver, consistency_tol=0.5)
        assert CONSISTENCY_TOL < state.residuals["p+1"] < 0.5

    def test_case1_constant_in_f_perp_is_invisible(self, unit_speed, params, rng):
        """Adding a constant to f_perp changes neither the data nor the recovered f0."""
        grid = unit_speed.grid
        shape = grid.shape
        solver = TransportSolver(unit_speed, params)
        f0 = random_polynomial(unit_speed, rng).astype(complex)
        f_perp = random_polynomial(unit_speed, rng)
        p = random_field(unit_speed, 0, rng, zero_boundary=True, scale=0.5)
        results = []
        for shift in (0.0, 2.0):
            perp = FiberField.from_modes({0: np.where(grid.mask, f_perp + shift, 0.0).astype(complex)}, shape, True)
            f_true = FiberField.from_modes({0: f0}, shape, True) + apply_X_perp(perp, unit_speed)
            harness = case_harness(f_true, p, params, unit_speed, solver)
            results.append((harness.data, reconstruct(harness.data, params, unit_speed, "1", backend="oracle",
                                                      truth=harness.truth, solver=solver)))
        (data_a, rec_a), (data_b, rec_b) = results
        assert np.allclose(data_a.value, data_b.value, rtol=1e-10, atol=1e-12)
        assert np.allclose(rec_a.parts["f0"], rec_b.parts["f0"], atol=1e-10)
        assert np.allclose(rec_a.parts["f_perp"], rec_b.parts["f_perp"], atol=1e-10)

    def test_case2_rescaled_absorption(self, fine_speed, rng):
        """Doubling sigma_a and regenerating the data recovers the same f1."""
        grid = fine_speed.grid
        f1 = random_field(fine_speed, 1, rng)
        f1.set_mode(0, np.zeros(grid.shape, dtype=complex))
        p = random_field(fine_speed, 0, rng, zero_boundary=True, scale=0.5)
        recovered = []
        for a in (1.0, 1.5):
            params = make_params(fine_speed, a=a)
            solver = TransportSolver(fine_speed, params)
            harness = case_harness(f1, p, params, fine_speed, solver)
            result = reconstruct(harness.data, params, fine_speed, "2", backend="oracle",
                                 truth=harness.truth, solver=solver)
            assert _mode_error(fine_speed, result.source, f1, (1, -1)) <= 5e-2
            recovered.append(result.source)
        assert _mode_error(fine_speed, recovered[1], recovered[0], (1, -1)) <= 5e-2


class TestSuiteThresholds:
    """Unscaled thresholds and the half-grid refinement check."""

    def test_gauge_threshold_is_unscaled(self):
        """The gauge suite reports 1e-3 at any resolution."""
        table = run_suites(SuiteContext(grid_n=24, boundary_n=64, dir_n=32, trials=1), ["gauge_null_space"])
        assert table["threshold"].iloc[0] == pytest.approx(1e-3)

    @pytest.mark.parametrize("coarse, fine, expected", [
        (1e-2, 2.6e-3, True),
        (1e-2, 9e-3, False),
        (5e-4, 5e-4, True),
    ])
    def test_halves_under_refinement(self, coarse, fine, expected):
        """Second order or already below the floor."""
        assert halves_under_refinement(coarse, fine) is expected

    def test_coarsened_halves_the_grid(self):
        """Only grid_n changes and it never drops below 16."""
        ctx = SuiteContext(grid_n=64, trials=2)
        assert ctx.coarsened().grid_n == 32
        assert ctx.coarsened().trials == 2
        assert SuiteContext(grid_n=24).coarsened().grid_n == 16

    def test_gauge_leakage_shrinks_with_the_grid(self):
        """|M (X + a - S) p| / |(X + a - S) p| drops by at least REFINEMENT_RATIO from grid 24 to 48."""
        ratios = []
        for grid_n in (24, 48):
            speed = make_speed(grid_n=grid_n)
            params = make_params(speed)
            p = random_field(speed, 1, get_rng(7), zero_boundary=True)
            ratios.append(gauge_verify(gauge_generate(p, params, speed), params, speed))
        assert ratios[1] <= REFINEMENT_RATIO * ratios[0]


@pytest.mark.slow
class TestSuiteRoundtrips:
    """Oracle and least-squares round trips at suite resolution."""

    def test_case_roundtrips(self):
        """Cases 1 and 2 recover the source with both backends."""
        table = run_suites(SuiteContext(trials=3), ["case_roundtrips"])
        assert bool(table["passed"].all()), table.to_string()

    def test_isotropic_roundtrips(self):
        """iso1 and iso2 recover the source with both backends."""
        table = run_suites(SuiteContext(trials=3), ["isotropic_roundtrips"])
        assert bool(table["passed"].all()), table.to_string()

    def test_gauge_and_descent(self):
        """Pure gauges are invisible and the descent ends at m - 1."""
        table = run_suites(SuiteContext(trials=3), ["gauge_null_space", "degree_descent"])
        assert bool(table["passed"].all()), table.to_string()

    def test_gauge_leakage_at_default_grid(self):
        """At DEFAULT_GRID_N the gauge leakage is below the unscaled 1e-3."""
        table = run_suites(SuiteContext(), ["gauge_null_space"])
        row = table.iloc[0]
        assert row["threshold"] == pytest.approx(1e-3)
        assert bool(row["passed"]), row["detail"]
