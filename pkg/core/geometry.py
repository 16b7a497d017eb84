# core/geometry.py
"""
Domain, speed field and geodesic flow on the disk.

This module provides:
- DomainSpec and the analytic speed families (constant, bump, gaussian)
- SpeedField: c, its gradient and curvature cached on a DiskGrid
- trace_rays: vectorized RK4 geodesic tracing with optional Jacobi fields
- flow / exit_time / boundary_mu for single phase points
- Boundary fan layout, convexity constant, Santalo quadrature
- simplicity_check diagnostics (non-trapping, convexity, conjugate points)

The metric is ``g = c^-2 id``; a phase point ``(x, y, theta)`` carries the
g-unit vector ``c (cos theta, sin theta)`` and the flow is

    x' = c cos(theta),  y' = c sin(theta),  theta' = -c_y cos(theta) + c_x sin(theta).
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import cumulative_trapezoid, trapezoid

from core.discretization import DiskGrid
from core.errors import ConfigError, NonTrappingError, UnboundedConvexityError
from utils.config import (
    DEFAULT_BOUNDARY_N,
    DEFAULT_DIR_N,
    DEFAULT_GRID_N,
    GLANCING_MARGIN,
    RAY_STEP_FRACTION,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
# Near-glancing |mu| values probed when checking convexity
CONVEXITY_PROBES = (1e-1, 1e-2)
CONVEXITY_GROWTH_LIMIT = 1.5


# ============================================================================
# Domain
# ============================================================================

@dataclass(frozen=True)
class DomainSpec:
    """Disk of given radius with grid and fan resolutions.

    ``path_cap`` bounds geodesic length in units of ``radius / min c``.
    """
    radius: float = 1.0
    grid_n: int = DEFAULT_GRID_N
    boundary_n: int = DEFAULT_BOUNDARY_N
    dir_n: int = DEFAULT_DIR_N
    glancing_margin: float = GLANCING_MARGIN
    path_cap: float = 40.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError("radius must be positive", path="domain/radius")
        if self.grid_n < 16:
            raise ConfigError("grid_n must be at least 16", path="domain/grid_n")
        if self.boundary_n % 2 or self.boundary_n <= 0:
            raise ConfigError("boundary_n must be a positive even integer", path="domain/boundary_n")
        if self.dir_n % 2 or self.dir_n <= 0:
            raise ConfigError("dir_n must be a positive even integer", path="domain/dir_n")
        if not 0 < self.glancing_margin < 0.5:
            raise ConfigError("glancing_margin must lie in (0, 0.5)", path="domain/glancing_margin")


@lru_cache(maxsize=8)
def get_grid(radius: float, grid_n: int) -> DiskGrid:
    """Shared DiskGrid per (radius, grid_n) so stencils and LU factors are reused."""
    grid = DiskGrid(radius, grid_n)
    if grid.n_nodes == 0:
        raise ConfigError("interior mask is empty", path="domain/grid_n")
    return grid


# ============================================================================
# Speed families
# ============================================================================

@dataclass(frozen=True)
class ConstantSpeed:
    c0: float = 1.0
    family = "constant"

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        c = np.full(x.shape, self.c0)
        zero = np.zeros(x.shape)
        return c, zero, zero.copy()

    def curvature(self, x, y):
        return np.zeros(np.shape(x))


@dataclass(frozen=True)
class BumpSpeed:
    """``c = c0 (1 + epsilon exp(-r^2 / width^2))``."""
    c0: float = 1.0
    epsilon: float = 0.1
    width: float = 0.5
    family = "bump"

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s2 = self.width ** 2
        bump = np.exp(-(x * x + y * y) / s2)
        c = self.c0 * (1.0 + self.epsilon * bump)
        scale = -2.0 * self.c0 * self.epsilon * bump / s2
        return c, scale * x, scale * y

    def curvature(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s2 = self.width ** 2
        r2 = x * x + y * y
        bump = np.exp(-r2 / s2)
        lap = bump * (4.0 * r2 / s2 ** 2 - 4.0 / s2)
        grad2 = 4.0 * r2 * bump ** 2 / s2 ** 2
        eps = self.epsilon
        return self.c0 ** 2 * ((1.0 + eps * bump) * eps * lap - eps ** 2 * grad2)


@dataclass(frozen=True)
class GaussianSpeed:
    """``c = c0 exp(-alpha r^2)``, curvature ``-4 alpha c^2``."""
    c0: float = 1.0
    alpha: float = 0.5
    family = "gaussian"

    def evaluate(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        c = self.c0 * np.exp(-self.alpha * (x * x + y * y))
        return c, -2.0 * self.alpha * x * c, -2.0 * self.alpha * y * c

    def curvature(self, x, y):
        c, _, _ = self.evaluate(x, y)
        return -4.0 * self.alpha * c ** 2


SPEED_PROFILES = {
    "constant": ConstantSpeed,
    "bump": BumpSpeed,
    "gaussian": GaussianSpeed,
}


def make_profile(family: str, **params):
    """Instantiate a speed family by name, ignoring parameters it does not take."""
    try:
        cls = SPEED_PROFILES[family]
    except KeyError:
        raise ConfigError(f"unknown speed family '{family}'", path="speed/family")
    accepted = {k: v for k, v in params.items() if k in cls.__dataclass_fields__}
    return cls(**accepted)


@dataclass
class SpeedField:
    """Speed ``c`` with gradient and curvature sampled on the full grid."""
    domain: DomainSpec
    profile: object
    grid: DiskGrid
    c: np.ndarray
    dcx: np.ndarray
    dcy: np.ndarray
    kappa: np.ndarray

    @classmethod
    def from_profile(cls, profile, domain: DomainSpec) -> "SpeedField":
        grid = get_grid(domain.radius, domain.grid_n)
        c, cx, cy = profile.evaluate(grid.x, grid.y)
        kappa = np.where(grid.mask, profile.curvature(grid.x, grid.y), 0.0)
        field_ = cls(domain, profile, grid, c, cx, cy, kappa)
        if field_.c_min <= 0:
            raise ConfigError("speed must be positive on the disk", path="speed")
        return field_

    @property
    def c_min(self) -> float:
        return float(self.c[self.grid.mask].min())

    @property
    def c_max(self) -> float:
        # Boundary nodes are outside the mask; include the closed disk for the step size
        return float(self.c[self.grid.r <= self.domain.radius + self.grid.h].max())

    @property
    def dz_c(self) -> np.ndarray:
        """Holomorphic derivative ``(c_x - i c_y) / 2``."""
        return 0.5 * (self.dcx - 1j * self.dcy)

    @property
    def dzbar_c(self) -> np.ndarray:
        return 0.5 * (self.dcx + 1j * self.dcy)

    def nodes(self, values: np.ndarray) -> np.ndarray:
        return self.grid.restrict(values)

    @property
    def max_time(self) -> float:
        return self.domain.path_cap * self.domain.radius / self.c_min

    @property
    def step(self) -> float:
        return RAY_STEP_FRACTION * self.grid.h / self.c_max


def curvature(speed: SpeedField) -> np.ndarray:
    """Gaussian curvature ``c^2 (d_xx + d_yy) log c`` by central differences on the mask."""
    grid = speed.grid
    logc = np.log(speed.c)
    lap = np.zeros_like(logc)
    lap[1:-1, 1:-1] = (
        logc[2:, 1:-1] + logc[:-2, 1:-1] + logc[1:-1, 2:] + logc[1:-1, :-2] - 4.0 * logc[1:-1, 1:-1]
    ) / grid.h ** 2
    return np.where(grid.mask, speed.c ** 2 * lap, 0.0)


# ============================================================================
# Ray tracing
# ============================================================================

@dataclass
class RayBundle:
    """Recorded states of a batch of traced rays, shape ``(n_rays, n_samples)``.

    Rays that exited early repeat their exit state, so padded trapezoid
    intervals have zero length.
    """
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    tau: np.ndarray
    trapped: np.ndarray
    jacobi: Optional[np.ndarray] = None


def _ray_rhs(profile, state: np.ndarray, jacobi: bool) -> np.ndarray:
    c, cx, cy = profile.evaluate(state[0], state[1])
    cos_t = np.cos(state[2])
    sin_t = np.sin(state[2])
    rows = [c * cos_t, c * sin_t, -cy * cos_t + cx * sin_t]
    if jacobi:
        rows.append(state[4])
        rows.append(-profile.curvature(state[0], state[1]) * state[3])
    return np.stack(rows)


def _rk4(profile, state, dt, jacobi):
    k1 = _ray_rhs(profile, state, jacobi)
    k2 = _ray_rhs(profile, state + 0.5 * dt * k1, jacobi)
    k3 = _ray_rhs(profile, state + 0.5 * dt * k2, jacobi)
    k4 = _ray_rhs(profile, state + dt * k3, jacobi)
    return state + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def trace_rays(
    x,
    y,
    theta,
    speed: SpeedField,
    *,
    jacobi: bool = False,
    record: bool = True,
    duration: Optional[float] = None,
    initial_step=None,
    on_cap: str = "raise",
) -> RayBundle:
    """Trace a batch of geodesics forward until they leave the disk.

    Args:
        x, y, theta: Starting phase points (1D arrays)
        speed: Speed field supplying the analytic profile
        jacobi: Also integrate ``J'' = -kappa J`` with ``J(0)=0, J'(0)=1``
        record: Keep every step (otherwise only start and end states)
        duration: Stop after this time instead of at the boundary
        initial_step: Per-ray first step; doubled each step up to the nominal one
        on_cap: ``"raise"`` or ``"flag"`` when a ray exceeds the time cap

    Returns:
        RayBundle with exit times ``tau`` (``nan`` for rays stopped by ``duration``)
    """
    R = speed.domain.radius
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    n_rays = x.size
    nominal = speed.step
    dt = np.full(n_rays, nominal)
    if initial_step is not None:
        dt = np.clip(np.broadcast_to(initial_step, (n_rays,)).astype(float), 1e-12 * R, nominal)
    max_time = speed.max_time if duration is None else float(duration)

    rows = [x, y, theta]
    if jacobi:
        rows += [np.zeros(n_rays), np.ones(n_rays)]
    state = np.stack(rows)
    t = np.zeros(n_rays)
    tau = np.full(n_rays, np.nan)
    trapped = np.zeros(n_rays, dtype=bool)

    r0 = np.hypot(x, y)
    outward = (r0 >= R * (1.0 - 1e-12)) & (x * np.cos(theta) + y * np.sin(theta) >= 0.0)
    tau[outward] = 0.0
    active = ~outward

    history_t: List[np.ndarray] = [t.copy()]
    history_s: List[np.ndarray] = [state.copy()]

    while active.any():
        idx = np.nonzero(active)[0]
        step = dt[idx]
        if duration is not None:
            step = np.minimum(step, duration - t[idx])
        old = state[:, idx]
        new = _rk4(speed.profile, old, step, jacobi)

        r2 = new[0] ** 2 + new[1] ** 2
        crossed = r2 >= R * R
        frac = np.ones(idx.size)
        if crossed.any():
            d = new[:2, crossed] - old[:2, crossed]
            p0 = old[:2, crossed]
            qa = np.sum(d * d, axis=0)
            qb = 2.0 * np.sum(p0 * d, axis=0)
            qc = np.minimum(np.sum(p0 * p0, axis=0) - R * R, 0.0)
            disc = np.sqrt(np.maximum(qb * qb - 4.0 * qa * qc, 0.0))
            with np.errstate(invalid="ignore", divide="ignore"):
                s = np.where(qa > 0, (-qb + disc) / (2.0 * qa), 0.0)
            frac[crossed] = np.clip(s, 0.0, 1.0)
            new[:, crossed] = old[:, crossed] + frac[crossed] * (new[:, crossed] - old[:, crossed])

        t[idx] += step * frac
        state[:, idx] = new
        exited = idx[crossed]
        tau[exited] = t[exited]
        active[exited] = False
        if duration is not None:
            active[idx[t[idx] >= duration * (1.0 - 1e-14)]] = False
        dt[idx] = np.minimum(nominal, 2.0 * dt[idx])

        over = active & (t > max_time)
        if over.any():
            if on_cap == "raise":
                raise NonTrappingError(
                    f"{int(over.sum())} geodesic(s) still inside the disk after t={max_time:.3g}"
                )
            trapped |= over
            active &= ~over
            tau[over] = np.inf

        if record or not active.any():
            history_t.append(t.copy())
            history_s.append(state.copy())

    ts = np.stack(history_t, axis=1)
    states = np.stack(history_s, axis=2)
    return RayBundle(
        t=ts,
        x=states[0],
        y=states[1],
        theta=states[2],
        tau=tau,
        trapped=trapped,
        jacobi=states[3] if jacobi else None,
    )


# ============================================================================
# Single phase points
# ============================================================================

@dataclass(frozen=True)
class PhasePoint:
    x: float
    y: float
    theta: float

    def unit_vector(self, speed: SpeedField) -> Tuple[float, float]:
        """Tangent vector ``c (cos theta, sin theta)``, of g-norm one."""
        c, _, _ = speed.profile.evaluate(self.x, self.y)
        c = float(c)
        return c * np.cos(self.theta), c * np.sin(self.theta)


@dataclass
class GeodesicPath:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    step: float
    tau_forward: float
    tau_backward: float
    attenuation: np.ndarray
    jacobi: Optional[np.ndarray] = None

    @property
    def points(self) -> List[PhasePoint]:
        return [PhasePoint(float(a), float(b), float(c)) for a, b, c in zip(self.x, self.y, self.theta)]

    @property
    def end(self) -> PhasePoint:
        return PhasePoint(float(self.x[-1]), float(self.y[-1]), float(self.theta[-1]))

    def to_frame(self) -> pd.DataFrame:
        """CSV-ready rows ``(t, x, y, theta)``."""
        return pd.DataFrame({"t": self.t, "x": self.x, "y": self.y, "theta": self.theta})


def exit_time(point: PhasePoint, speed: SpeedField) -> Tuple[float, float]:
    """Exit times ``(tau(x, v), tau(x, -v))``."""
    bundle = trace_rays(
        [point.x, point.x],
        [point.y, point.y],
        [point.theta, point.theta + np.pi],
        speed,
        record=False,
    )
    return float(bundle.tau[0]), float(bundle.tau[1])


def flow(
    point: PhasePoint,
    speed: SpeedField,
    direction: str = "forward",
    duration: Optional[float] = None,
    attenuation: Optional[np.ndarray] = None,
    jacobi: bool = False,
) -> GeodesicPath:
    """Follow the geodesic through ``point`` to the boundary (or for ``duration``).

    Args:
        point: Starting phase point inside the closed disk
        speed: Speed field
        direction: ``"forward"`` follows v, ``"backward"`` follows -v
        duration: Optional fixed flow time
        attenuation: Full-grid attenuation accumulated along the path
        jacobi: Record the Jacobi field along the path

    Returns:
        GeodesicPath whose directions are those of the flow ``phi_t`` itself
    """
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    flip = np.pi if direction == "backward" else 0.0
    bundle = trace_rays([point.x], [point.y], [point.theta + flip], speed, jacobi=jacobi, duration=duration)
    t = bundle.t[0]
    keep = np.concatenate([[True], np.diff(t) > 0])
    xs, ys, ths = bundle.x[0][keep], bundle.y[0][keep], bundle.theta[0][keep]
    t = t[keep]

    if attenuation is None:
        accumulated = np.zeros_like(t)
    else:
        grid = speed.grid
        a_samples = grid.sample(grid.restrict(attenuation), xs, ys).real
        accumulated = cumulative_trapezoid(a_samples, t, initial=0.0)

    tau_fwd, tau_bwd = exit_time(point, speed)
    return GeodesicPath(
        t=t,
        x=xs,
        y=ys,
        theta=np.mod(ths - flip, TWO_PI),
        step=speed.step,
        tau_forward=tau_fwd,
        tau_backward=tau_bwd,
        attenuation=accumulated,
        jacobi=bundle.jacobi[0][keep] if jacobi else None,
    )


def boundary_mu(s, theta, speed: SpeedField):
    """``g(nu, v) = cos(theta - s / R)`` at arclength ``s`` on the circle."""
    phi = np.asarray(s) / speed.domain.radius
    return np.cos(np.asarray(theta) - phi)


# ============================================================================
# Boundary fans
# ============================================================================

def fan_layout(domain: DomainSpec, side: str, margin: Optional[float] = None,
               boundary_n: Optional[int] = None, dir_n: Optional[int] = None) -> Dict[str, np.ndarray]:
    """Arc-major sample layout of Gamma_+ (``side='+'``) or Gamma_- (``'-'``).

    Directions are midpoints ``psi_j`` measured from the outward normal;
    entries with ``|mu| < margin`` or on the wrong side are dropped.
    """
    if side not in ("+", "-"):
        raise ValueError(f"side must be '+' or '-', got {side!r}")
    margin = domain.glancing_margin if margin is None else margin
    nb = boundary_n or domain.boundary_n
    nd = dir_n or domain.dir_n
    phi = TWO_PI * np.arange(nb) / nb
    psi = -np.pi + TWO_PI * (np.arange(nd) + 0.5) / nd
    arc, direction = np.meshgrid(np.arange(nb), np.arange(nd), indexing="ij")
    arc, direction = arc.ravel(), direction.ravel()
    mu = np.cos(psi[direction])
    keep = mu >= margin if side == "+" else mu <= -margin
    arc, direction, mu = arc[keep], direction[keep], mu[keep]
    return {
        "arc_index": arc,
        "dir_index": direction,
        "phi": phi[arc],
        "theta": np.mod(phi[arc] + psi[direction], TWO_PI),
        "mu": mu,
        "d_phi": np.full(arc.size, TWO_PI / nb),
        "d_theta": np.full(arc.size, TWO_PI / nd),
    }


def _incoming_step(speed: SpeedField, mu: np.ndarray, c_boundary: np.ndarray) -> np.ndarray:
    """First step resolving chords of length about ``2 R |mu| / c``."""
    chord = 2.0 * speed.domain.radius * np.abs(mu) / c_boundary
    return np.minimum(speed.step, chord / 16.0)


def _trace_incoming(speed: SpeedField, phi, theta, mu, **kwargs) -> RayBundle:
    R = speed.domain.radius
    bx, by = R * np.cos(phi), R * np.sin(phi)
    c_b, _, _ = speed.profile.evaluate(bx, by)
    return trace_rays(bx, by, theta, speed, initial_step=_incoming_step(speed, mu, c_b), **kwargs)


def convexity_constant(speed: SpeedField, domain: Optional[DomainSpec] = None) -> float:
    """Sup of ``tau / |mu|`` over the sampled Gamma_- fan outside the glancing margin.

    Raises:
        UnboundedConvexityError: when the ratio keeps growing towards glancing
    """
    domain = domain or speed.domain
    layout = fan_layout(domain, "-")
    bundle = _trace_incoming(speed, layout["phi"], layout["theta"], layout["mu"], record=False)
    ratios = bundle.tau / np.abs(layout["mu"])

    nb = domain.boundary_n
    phi = TWO_PI * np.arange(nb) / nb
    probe_max = []
    for eps in CONVEXITY_PROBES + (domain.glancing_margin,):
        psi = np.pi / 2.0 + np.arcsin(eps)
        probe_phi = np.concatenate([phi, phi])
        probe_theta = np.concatenate([phi + psi, phi - psi])
        probe_mu = np.full(probe_phi.size, -eps)
        probe = _trace_incoming(speed, probe_phi, probe_theta, probe_mu, record=False)
        probe_ratio = probe.tau / eps
        probe_max.append(float(np.max(probe_ratio)))
        ratios = np.concatenate([ratios, probe_ratio])

    if probe_max[-1] > CONVEXITY_GROWTH_LIMIT * probe_max[0] and probe_max[-1] > probe_max[1]:
        raise UnboundedConvexityError(
            f"tau/|mu| grows from {probe_max[0]:.4g} to {probe_max[-1]:.4g} towards glancing"
        )
    c0 = float(np.max(ratios))
    logger.info("Convexity constant C0 = %.6g", c0)
    return c0


def santalo_integrate(F: Callable, speed: SpeedField, domain: Optional[DomainSpec] = None,
                      boundary_n: Optional[int] = None, dir_n: Optional[int] = None) -> float:
    """Phase-space integral of ``F(x, y, theta)`` as a fan-beam integral over Gamma_+.

    Each entry contributes ``mu * dSigma^2 * int_{-tau(x,-v)}^0 F(phi_t(x, v)) dt``.
    """
    domain = domain or speed.domain
    layout = fan_layout(domain, "+", boundary_n=boundary_n, dir_n=dir_n)
    R = domain.radius
    bx, by = R * np.cos(layout["phi"]), R * np.sin(layout["phi"])
    c_b, _, _ = speed.profile.evaluate(bx, by)
    weights = R * layout["d_phi"] / c_b * layout["d_theta"]

    bundle = _trace_incoming(speed, layout["phi"], layout["theta"] + np.pi, -layout["mu"])
    values = np.asarray(F(bundle.x, bundle.y, bundle.theta + np.pi), dtype=float)
    values = np.broadcast_to(values, bundle.t.shape)
    line = trapezoid(values, bundle.t, axis=1)
    return float(np.sum(layout["mu"] * weights * line))


def phase_space_integrate(F: Callable, speed: SpeedField, n_theta: int = 64) -> float:
    """Direct quadrature of ``int_M int F c^-2 dtheta dx``."""
    grid = speed.grid
    theta = TWO_PI * np.arange(n_theta) / n_theta
    px = grid.node_x[:, None]
    py = grid.node_y[:, None]
    values = np.broadcast_to(np.asarray(F(px, py, theta[None, :]), dtype=float), (grid.n_nodes, n_theta))
    fiber = values.mean(axis=1) * TWO_PI
    return float(grid.integrate(fiber / speed.nodes(speed.c) ** 2))


# ============================================================================
# Simplicity diagnostics
# ============================================================================

@dataclass
class SimplicityReport:
    max_tau: float
    non_trapping: bool
    min_ratio: float
    max_ratio: float
    convex: bool
    conjugate_points: int
    first_conjugate_time: float
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.non_trapping and self.convex and self.conjugate_points == 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "max_tau": self.max_tau,
            "non_trapping": self.non_trapping,
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "convex": self.convex,
            "conjugate_points": self.conjugate_points,
            "first_conjugate_time": self.first_conjugate_time,
            "passed": self.passed,
            "notes": list(self.notes),
        }


def simplicity_check(speed: SpeedField, domain: Optional[DomainSpec] = None) -> SimplicityReport:
    """Flag trapping, non-convexity and conjugate points along the Gamma_- fan."""
    domain = domain or speed.domain
    layout = fan_layout(domain, "-")
    bundle = _trace_incoming(
        speed, layout["phi"], layout["theta"], layout["mu"], jacobi=True, on_cap="flag"
    )
    notes: List[str] = []
    trapped = bundle.trapped
    finite = ~trapped
    non_trapping = not trapped.any()
    if not non_trapping:
        notes.append(f"{int(trapped.sum())} ray(s) exceeded the path cap")
    max_tau = float(np.max(bundle.tau[finite])) if finite.any() else float("inf")

    ratios = bundle.tau[finite] / np.abs(layout["mu"][finite])
    min_ratio = float(ratios.min()) if ratios.size else float("nan")
    max_ratio = float(ratios.max()) if ratios.size else float("nan")
    convex = bool(min_ratio > 0)
    if non_trapping:
        try:
            convexity_constant(speed, domain)
        except UnboundedConvexityError as exc:
            convex = False
            notes.append(str(exc))

    # First return of J to zero strictly inside the ray
    J = bundle.jacobi
    inside = bundle.t < bundle.tau[:, None] - 1e-12
    inside[:, 0] = False
    vanished = inside & (J <= 0.0)
    hit = vanished.any(axis=1) & finite
    first_time = float("inf")
    if hit.any():
        first_idx = np.argmax(vanished[hit], axis=1)
        first_time = float(np.min(bundle.t[hit][np.arange(first_idx.size), first_idx]))
        notes.append(f"Jacobi field vanishes on {int(hit.sum())} fan geodesic(s)")

    report = SimplicityReport(
        max_tau=max_tau,
        non_trapping=non_trapping,
        min_ratio=min_ratio,
        max_ratio=max_ratio,
        convex=convex,
        conjugate_points=int(hit.sum()),
        first_conjugate_time=first_time,
        notes=notes,
    )
    logger.info("Simplicity check: %s", "passed" if report.passed else "; ".join(notes))
    return report
