# tests/test_geometry.py
"""
Tests for core/geometry.py: domains, speed families, geodesic flow, exit
times, boundary fans, the convexity constant and simplicity diagnostics.
"""

import numpy as np
import pytest

from conftest import make_speed
from core.errors import ConfigError
from core.geometry import (
    DomainSpec,
    PhasePoint,
    boundary_mu,
    convexity_constant,
    exit_time,
    fan_layout,
    flow,
    make_profile,
    phase_space_integrate,
    santalo_integrate,
    simplicity_check,
    trace_rays,
)


class TestDomainSpec:
    """Validation of disk and fan resolutions."""

    def test_defaults_are_valid(self):
        """The default domain is the unit disk."""
        domain = DomainSpec()
        assert domain.radius == 1.0
        assert domain.boundary_n % 2 == 0

    @pytest.mark.parametrize("kwargs", [
        {"radius": 0.0},
        {"grid_n": 8},
        {"boundary_n": 63},
        {"dir_n": 31},
        {"glancing_margin": 0.7},
    ])
    def test_invalid_values_raise(self, kwargs):
        """Each bad field raises ConfigError."""
        with pytest.raises(ConfigError):
            DomainSpec(**kwargs)


class TestSpeedProfiles:
    """Speed families and their curvature."""

    def test_unknown_family(self):
        """Unknown families name the config path."""
        with pytest.raises(ConfigError) as info:
            make_profile("spiral")
        assert "speed/family" in str(info.value)

    def test_extra_parameters_ignored(self):
        """Parameters of other families are dropped."""
        profile = make_profile("constant", c0=2.0, alpha=3.0)
        c, cx, cy = profile.evaluate(np.array([0.1]), np.array([0.2]))
        assert c[0] == 2.0 and cx[0] == 0.0 and cy[0] == 0.0

    def test_gaussian_curvature(self, gaussian_speed):
        """Gaussian speed has curvature -4 alpha c^2 on the mask."""
        grid = gaussian_speed.grid
        expected = -4.0 * 0.2 * gaussian_speed.c ** 2
        assert np.allclose(gaussian_speed.kappa[grid.mask], expected[grid.mask])

    def test_nonpositive_speed_rejected(self):
        """A speed that is not positive on the disk is a config error."""
        with pytest.raises(ConfigError):
            make_speed("constant", c0=-1.0)


class TestGeodesicFlow:
    """Ray tracing against straight-line oracles and reversibility."""

    def test_center_ray_exits_at_unit_time(self, unit_speed):
        """From the center along +x the ray exits at (1, 0) after time 1."""
        path = flow(PhasePoint(0.0, 0.0, 0.0), unit_speed)
        assert path.tau_forward == pytest.approx(1.0, abs=1e-9)
        assert path.x[-1] == pytest.approx(1.0, abs=1e-9)
        assert path.y[-1] == pytest.approx(0.0, abs=1e-9)

    def test_diameter_chord(self, unit_speed):
        """From (1, 0) pointing inward the ray crosses the diameter in time 2."""
        bundle = trace_rays([1.0], [0.0], [np.pi], unit_speed)
        assert bundle.tau[0] == pytest.approx(2.0, abs=1e-9)
        assert bundle.x[0, -1] == pytest.approx(-1.0, abs=1e-9)

    def test_outward_boundary_point(self, unit_speed):
        """An outward boundary direction has zero exit time."""
        tau_fwd, tau_bwd = exit_time(PhasePoint(1.0, 0.0, 0.0), unit_speed)
        assert tau_fwd == 0.0
        assert tau_bwd == pytest.approx(2.0, abs=1e-9)

    def test_exit_time_oracle(self, unit_speed, rng):
        """tau = 2 cos(beta) for random inward entries when c = 1."""
        phi = rng.uniform(0.0, 2.0 * np.pi, 200)
        beta = rng.uniform(-np.pi / 2 + 0.05, np.pi / 2 - 0.05, 200)
        bundle = trace_rays(np.cos(phi), np.sin(phi), phi + np.pi + beta, unit_speed, record=False)
        assert np.max(np.abs(bundle.tau - 2.0 * np.cos(beta))) <= 1e-6

    def test_flow_is_reversible(self, gaussian_speed):
        """Flowing forward then backward for the same time returns to the start."""
        start = PhasePoint(0.1, -0.2, 0.7)
        forward = flow(start, gaussian_speed, duration=0.5)
        back = flow(forward.end, gaussian_speed, direction="backward", duration=0.5)
        assert back.x[-1] == pytest.approx(start.x, abs=1e-6)
        assert back.y[-1] == pytest.approx(start.y, abs=1e-6)

    def test_path_frame_columns(self, unit_speed):
        """Paths export as (t, x, y, theta) rows starting at t = 0."""
        frame = flow(PhasePoint(0.0, 0.0, 0.3), unit_speed).to_frame()
        assert list(frame.columns) == ["t", "x", "y", "theta"]
        assert frame["t"].iloc[0] == 0.0
        assert frame["t"].is_monotonic_increasing

    def test_bad_direction(self, unit_speed):
        """Only forward and backward flows exist."""
        with pytest.raises(ValueError):
            flow(PhasePoint(0.0, 0.0, 0.0), unit_speed, direction="sideways")


class TestBoundaryFans:
    """Gamma_+ / Gamma_- layouts and boundary measures."""

    def test_sides_partition_directions(self):
        """Outgoing entries have mu > 0 and incoming entries mu < 0."""
        domain = DomainSpec(grid_n=24, boundary_n=16, dir_n=16)
        out = fan_layout(domain, "+")
        inc = fan_layout(domain, "-")
        assert np.all(out["mu"] > 0) and np.all(inc["mu"] < 0)
        assert out["phi"].size == inc["phi"].size == 16 * 8

    def test_boundary_mu(self, unit_speed):
        """mu is the cosine between direction and outward normal."""
        assert boundary_mu(0.0, 0.0, unit_speed) == pytest.approx(1.0)
        assert boundary_mu(0.0, np.pi, unit_speed) == pytest.approx(-1.0)

    def test_unknown_side(self):
        """Sides are '+' or '-'."""
        with pytest.raises(ValueError):
            fan_layout(DomainSpec(grid_n=24), "0")


class TestQuadratures:
    """Santalo identity and the convexity constant on disks."""

    def test_santalo_unit_disk(self, unit_speed):
        """F = 1 integrates to 2 pi^2 on the Euclidean unit disk."""
        value = santalo_integrate(lambda x, y, t: np.ones_like(x), unit_speed)
        assert value == pytest.approx(2.0 * np.pi ** 2, rel=1e-2)

    def test_direct_quadrature_unit_disk(self, unit_speed):
        """Grid quadrature of F = 1 is 2 pi^2; cos(theta) averages out."""
        ones = phase_space_integrate(lambda x, y, t: np.ones_like(x * t), unit_speed)
        assert ones == pytest.approx(2.0 * np.pi ** 2, rel=1e-10)
        assert abs(phase_space_integrate(lambda x, y, t: np.cos(t) + 0 * x, unit_speed)) < 1e-10

    def test_convexity_constant_unit_disk(self, unit_speed):
        """C0 = 2 on the unit disk."""
        assert 1.98 <= convexity_constant(unit_speed) <= 2.02

    def test_convexity_constant_scales_with_radius(self, unit_speed):
        """C0 scales like the radius."""
        wide = make_speed(radius=2.0)
        ratio = convexity_constant(wide) / convexity_constant(unit_speed)
        assert ratio == pytest.approx(2.0, rel=1e-2)


class TestSimplicity:
    """Non-trapping, convexity and conjugate-point flags."""

    def test_euclidean_disk_is_simple(self, unit_speed):
        """The Euclidean disk passes every check."""
        report = simplicity_check(unit_speed)
        assert report.passed
        assert report.max_tau == pytest.approx(2.0, abs=1e-2)

    def test_gaussian_disk_is_simple(self, gaussian_speed):
        """Negative curvature produces no conjugate points."""
        report = simplicity_check(gaussian_speed)
        assert report.conjugate_points == 0
        assert report.non_trapping and report.convex

    def test_focusing_lens_has_conjugate_points(self):
        """A slow central lens focuses geodesics and is flagged."""
        lens = make_speed("bump", c0=1.0, epsilon=-0.75, width=0.4)
        report = simplicity_check(lens)
        assert report.conjugate_points > 0
        assert not report.passed
        assert report.to_dict()["passed"] is False
