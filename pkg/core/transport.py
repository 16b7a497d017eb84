# core/transport.py
"""
Attenuated transport along geodesics.

This module provides:
- BoundaryFan: quadrature samples of Gamma_+ / Gamma_- with data values
- CharacteristicSweep: backward characteristics from a set of phase points,
  reused for every integrand (and as sparse mode matrices)
- TransportSolver: free transport T^-1, source iteration and measurement
- Module-level operations: attenuated_ray_transform, solve_free_transport,
  forward_solve, measure, norm_bound_check, trace_counterexample,
  green_identity_check, trace_bound_check

Every characteristic integral is a composite trapezoid over RK4 samples,

    w(x, v) = int_0^tau(x,-v) q(phi_-s(x, v)) exp(-int_0^s a) ds,

evaluated directly from the start point (never interpolated from the grid).
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.integrate import cumulative_trapezoid

from core.errors import DegreeOverflowError, NonConvergenceError
from core.fiber_calculus import (
    FiberField,
    OpticalParams,
    apply_S,
    decompose,
    l2_norm,
    mode_norms,
    q_infty,
    random_field,
    apply_eta,
)
from core.geometry import (
    SpeedField,
    _incoming_step,
    convexity_constant,
    fan_layout,
    trace_rays,
)
from utils.config import (
    DEFAULT_CHUNK_SIZE,
    DEGREE_OVERFLOW_TOL,
    N_MAX_BUFFER,
    PROGRESS_MIN_RAYS,
    RAY_CACHE_LIMIT,
    SOURCE_ITERATION_MAX,
    SOURCE_ITERATION_TOL,
    SOURCE_ITERATION_WINDOW,
)
from utils.helpers import ProgressTracker, get_rng

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
POSITIVITY_TOL = 1e-8


# ============================================================================
# Boundary fans
# ============================================================================

@dataclass
class BoundaryFan:
    """Non-glancing samples of Gamma_+ or Gamma_-, arc-major.

    ``weight`` is the ``dSigma^2 = ds_g dtheta`` quadrature weight; ``tau`` is
    the travel time through the disk (``tau(x,-v)`` on Gamma_+).
    """
    side: str
    radius: float
    arc_index: np.ndarray
    dir_index: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    weight: np.ndarray
    value: np.ndarray

    @property
    def size(self) -> int:
        return int(self.phi.size)

    @property
    def s(self) -> np.ndarray:
        """Arclength of each entry."""
        return self.radius * self.phi

    @property
    def x(self) -> np.ndarray:
        return self.radius * np.cos(self.phi)

    @property
    def y(self) -> np.ndarray:
        return self.radius * np.sin(self.phi)

    def with_values(self, values) -> "BoundaryFan":
        return replace(self, value=np.asarray(values, dtype=complex).copy())

    def norm(self) -> float:
        """L2(Gamma) norm with respect to ``dSigma^2``."""
        return float(np.sqrt(np.sum(np.abs(self.value) ** 2 * self.weight)))

    def inner(self, other: "BoundaryFan") -> complex:
        return complex(np.sum(self.value * np.conj(other.value) * self.weight))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "s": self.s,
            "theta_in": self.theta,
            "mu": self.mu,
            "tau": self.tau,
            "re": self.value.real,
            "im": self.value.imag,
        })


def build_fan(speed: SpeedField, side: str = "+", boundary_n: Optional[int] = None,
              dir_n: Optional[int] = None, margin: Optional[float] = None) -> BoundaryFan:
    """Sample Gamma_+ or Gamma_- and compute travel times through the disk."""
    layout = fan_layout(speed.domain, side, margin=margin, boundary_n=boundary_n, dir_n=dir_n)
    R = speed.domain.radius
    bx, by = R * np.cos(layout["phi"]), R * np.sin(layout["phi"])
    c_b, _, _ = speed.profile.evaluate(bx, by)
    trace_theta = layout["theta"] + (np.pi if side == "+" else 0.0)
    bundle = trace_rays(
        bx, by, trace_theta, speed,
        record=False,
        initial_step=_incoming_step(speed, layout["mu"], c_b),
    )
    return BoundaryFan(
        side=side,
        radius=R,
        arc_index=layout["arc_index"],
        dir_index=layout["dir_index"],
        phi=layout["phi"],
        theta=layout["theta"],
        mu=layout["mu"],
        tau=bundle.tau,
        weight=R * layout["d_phi"] / c_b * layout["d_theta"],
        value=np.zeros(layout["phi"].size, dtype=complex),
    )


# ============================================================================
# Characteristic sweeps
# ============================================================================

@dataclass
class RaySamples:
    """Interpolation data of one chunk of backward characteristics."""
    rays: np.ndarray
    base: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    phase: np.ndarray
    weight: np.ndarray

    @property
    def count(self) -> int:
        return int(self.base.size)


class CharacteristicSweep:
    """Backward characteristics from fixed phase points.

    Samples are traced once and cached while their total count stays below
    ``cache_limit``; larger sweeps re-trace chunk by chunk on every use.
    """

    def __init__(self, speed: SpeedField, attenuation: Optional[np.ndarray], x, y, theta,
                 initial_step=None, chunk_size: int = DEFAULT_CHUNK_SIZE,
                 cache_limit: int = RAY_CACHE_LIMIT):
        self.speed = speed
        self.grid = speed.grid
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.theta = np.asarray(theta, dtype=float)
        self.n_rays = self.x.size
        self.initial_step = None if initial_step is None else np.broadcast_to(initial_step, self.x.shape)
        self.chunk_size = chunk_size
        self.cache_limit = cache_limit
        if attenuation is None or not np.any(attenuation):
            self._a_ext = None
        else:
            self._a_ext = self.grid.extend(self.grid.restrict(np.asarray(attenuation, dtype=float)))

        # Similar flat chord lengths share a chunk, which keeps padding small
        ux, uy = -np.cos(self.theta), -np.sin(self.theta)
        along = self.x * ux + self.y * uy
        R = speed.domain.radius
        chord = along + np.sqrt(np.maximum(along ** 2 + R * R - self.x ** 2 - self.y ** 2, 0.0))
        self._order = np.argsort(chord, kind="stable")
        self._cache: Optional[List[RaySamples]] = None
        self._cache_disabled = False

    def _trace(self, rays: np.ndarray) -> RaySamples:
        step = None if self.initial_step is None else self.initial_step[rays]
        bundle = trace_rays(self.x[rays], self.y[rays], self.theta[rays] + np.pi, self.speed,
                            initial_step=step)
        t = bundle.t
        dt = np.diff(t, axis=1)
        weight = np.zeros_like(t)
        weight[:, :-1] += 0.5 * dt
        weight[:, 1:] += 0.5 * dt

        base, fx, fy = self.grid.locate(bundle.x, bundle.y)
        if self._a_ext is not None:
            a_samples = self.grid.interpolate(self._a_ext, base, fx, fy)
            weight = weight * np.exp(-cumulative_trapezoid(a_samples, t, axis=1, initial=0.0))
        phase = np.exp(1j * (bundle.theta + np.pi))
        return RaySamples(rays, base, fx, fy, phase, weight)

    def chunks(self) -> Iterator[RaySamples]:
        if self._cache is not None:
            yield from self._cache
            return
        collected: List[RaySamples] = []
        total = 0
        for start in range(0, self.n_rays, self.chunk_size):
            samples = self._trace(self._order[start:start + self.chunk_size])
            total += samples.count
            if not self._cache_disabled:
                if total <= self.cache_limit:
                    collected.append(samples)
                else:
                    self._cache_disabled = True
                    collected = []
                    logger.debug("Ray cache disabled: more than %d samples", self.cache_limit)
            yield samples
        if not self._cache_disabled:
            self._cache = collected

    def integrate(self, q: FiberField) -> np.ndarray:
        """Weighted characteristic integral of ``q`` for every start point."""
        active = [n for n in range(-q.order, q.order + 1) if np.any(q.mode(n))]
        out = np.zeros(self.n_rays, dtype=complex)
        if not active:
            return out
        ext = {n: self.grid.extend(self.grid.restrict(q.mode(n))) for n in active}
        lo, hi = active[0], active[-1]
        with ProgressTracker("Characteristic sweep", total_steps=self.n_rays,
                             show_progress=self.n_rays >= PROGRESS_MIN_RAYS) as tracker:
            for samples in self.chunks():
                acc = np.zeros(samples.base.shape, dtype=complex)
                running = samples.phase ** lo
                for n in range(lo, hi + 1):
                    if n in ext:
                        acc += running * self.grid.interpolate(ext[n], samples.base, samples.fx, samples.fy)
                    running = running * samples.phase
                out[samples.rays] = np.sum(acc * samples.weight, axis=1)
                tracker.update(tracker.current_step + samples.rays.size)
        return out

    def matrix(self, n: int) -> sparse.csr_matrix:
        """Sparse map from a mask-node grid on mode ``n`` to the integrals."""
        grid = self.grid
        n_full = grid.n * grid.n
        rows, cols, vals = [], [], []
        for samples in self.chunks():
            coef = samples.weight * samples.phase ** n
            ray_rows = np.broadcast_to(samples.rays[:, None], samples.base.shape)
            corners = (
                (0, (1.0 - samples.fx) * (1.0 - samples.fy)),
                (grid.n, samples.fx * (1.0 - samples.fy)),
                (1, (1.0 - samples.fx) * samples.fy),
                (grid.n + 1, samples.fx * samples.fy),
            )
            for offset, bilinear in corners:
                rows.append(ray_rows.ravel())
                cols.append((samples.base + offset).ravel())
                vals.append((coef * bilinear).ravel())
        full = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_rays, n_full),
        ).tocsr()
        return (full @ grid.extension).tocsr()


def fan_sweep(fan: BoundaryFan, speed: SpeedField, attenuation: Optional[np.ndarray],
              **kwargs) -> CharacteristicSweep:
    """Sweep ending exactly at the Gamma_+ entries of ``fan``."""
    c_b, _, _ = speed.profile.evaluate(fan.x, fan.y)
    return CharacteristicSweep(
        speed, attenuation, fan.x, fan.y, fan.theta,
        initial_step=_incoming_step(speed, fan.mu, c_b), **kwargs,
    )


# ============================================================================
# Transport solver
# ============================================================================

@dataclass
class ForwardResult:
    u: FiberField
    iterations: int
    residuals: List[float] = field(default_factory=list)

    def __iter__(self):
        return iter((self.u, self.iterations, self.residuals))


class TransportSolver:
    """Free transport, source iteration and measurement for fixed (speed, a)."""

    def __init__(self, speed: SpeedField, params: Optional[OpticalParams] = None,
                 attenuation: Optional[np.ndarray] = None, *,
                 tol: float = SOURCE_ITERATION_TOL, max_iter: int = SOURCE_ITERATION_MAX,
                 window: int = SOURCE_ITERATION_WINDOW, n_extra: int = N_MAX_BUFFER,
                 degree_tol: float = DEGREE_OVERFLOW_TOL):
        self.speed = speed
        self.params = params
        if attenuation is None and params is not None:
            attenuation = params.a
        self.attenuation = attenuation
        self.tol = tol
        self.max_iter = max_iter
        self.window = window
        self.n_extra = n_extra
        self.degree_tol = degree_tol
        self._node_sweeps: Dict[int, CharacteristicSweep] = {}
        self._fan_sweeps: Dict[int, CharacteristicSweep] = {}
        self._fan: Optional[BoundaryFan] = None

    # -- sweeps ------------------------------------------------------------

    def node_sweep(self, n_theta: int) -> CharacteristicSweep:
        if n_theta not in self._node_sweeps:
            grid = self.speed.grid
            theta = TWO_PI * np.arange(n_theta) / n_theta
            xs = np.repeat(grid.node_x, n_theta)
            ys = np.repeat(grid.node_y, n_theta)
            ths = np.tile(theta, grid.n_nodes)
            logger.debug("Tracing %d interior characteristics", xs.size)
            self._node_sweeps[n_theta] = CharacteristicSweep(self.speed, self.attenuation, xs, ys, ths)
        return self._node_sweeps[n_theta]

    @property
    def fan(self) -> BoundaryFan:
        if self._fan is None:
            self._fan = build_fan(self.speed, "+")
        return self._fan

    def fan_sweep(self, fan: Optional[BoundaryFan] = None) -> CharacteristicSweep:
        fan = fan or self.fan
        key = id(fan)
        if key not in self._fan_sweeps:
            self._fan_sweeps[key] = fan_sweep(fan, self.speed, self.attenuation)
        return self._fan_sweeps[key]

    # -- operations --------------------------------------------------------

    def free_transport(self, q: FiberField, n_max: Optional[int] = None) -> FiberField:
        """``w`` with ``(X + a) w = q`` and zero inflow, re-expanded to ``n_max`` modes."""
        grid = self.speed.grid
        n_max = q.degree + self.n_extra if n_max is None else n_max
        if not np.any(q.modes):
            return FiberField.zeros(grid.shape, n_max, q.real_flag)
        n_theta = 2 * n_max + 1
        values = self.node_sweep(n_theta).integrate(q).reshape(grid.n_nodes, n_theta)
        if q.real_flag:
            values = values.real
        samples = np.zeros((n_theta,) + grid.shape, dtype=values.dtype)
        samples[:, grid.nodes[0], grid.nodes[1]] = values.T
        w = decompose(samples, order=n_max, real_flag=q.real_flag)
        self._check_tail(w)
        return w

    def _check_tail(self, w: FiberField) -> None:
        norms = mode_norms(w, self.speed)
        total = float(np.sum(norms))
        if total == 0.0 or w.order == 0:
            return
        tail = float(norms[0] + norms[-1]) / total
        if tail > self.degree_tol:
            raise DegreeOverflowError(
                f"angular tail {tail:.3e} at N_max={w.order} exceeds {self.degree_tol:.1e}"
            )

    def forward(self, f: FiberField,
                on_iterate: Optional[Callable[[int, FiberField, FiberField], None]] = None) -> ForwardResult:
        """Source iteration ``u <- T^-1 (S u + f)``.

        Args:
            f: Source field.
            on_iterate: Called as ``on_iterate(iteration, u, rhs)`` after every
                sweep, with ``u = T^-1 rhs`` the new iterate.

        Returns:
            ForwardResult with the converged ``u`` and the update history.
        """
        params = self.params
        if params is None:
            raise ValueError("forward solve needs optical parameters")
        n_max = params.m_k + f.degree + self.n_extra
        if not np.any(f.modes):
            return ForwardResult(FiberField.zeros(f.shape, n_max, f.real_flag), 0, [])

        u = self.free_transport(f, n_max)
        if on_iterate is not None:
            on_iterate(1, u, f)
        if not np.any(params.k_modes):
            return ForwardResult(u, 1, [])

        residuals: List[float] = []
        for iteration in range(2, self.max_iter + 1):
            rhs = apply_S(params, u) + f
            u_next = self.free_transport(rhs, n_max)
            if on_iterate is not None:
                on_iterate(iteration, u_next, rhs)
            scale = l2_norm(u_next, self.speed)
            update = l2_norm(u_next - u, self.speed) / scale if scale > 0 else 0.0
            residuals.append(update)
            u = u_next
            if update < self.tol:
                logger.info("Source iteration converged in %d iterations", iteration)
                return ForwardResult(u, iteration, residuals)
            if len(residuals) > self.window:
                recent = np.array(residuals[-self.window - 1:])
                if np.all(recent[1:] >= recent[:-1]):
                    raise NonConvergenceError(
                        f"update ratios stayed >= 1 over {self.window} iterations", residuals
                    )
        raise NonConvergenceError(f"no convergence after {self.max_iter} iterations", residuals)

    def ray_transform(self, q: FiberField, fan: Optional[BoundaryFan] = None) -> BoundaryFan:
        """Attenuated integrals of ``q`` ending at the Gamma_+ entries."""
        fan = fan or self.fan
        return fan.with_values(self.fan_sweep(fan).integrate(q))

    def measure(self, f: FiberField, fan: Optional[BoundaryFan] = None) -> BoundaryFan:
        """``u|Gamma_+`` by one extra sweep of ``S u + f`` to the fan entries."""
        result = self.forward(f)
        data = self.ray_transform(apply_S(self.params, result.u) + f, fan)
        _flag_negative(data, f, self.params)
        return data


def _flag_negative(data: BoundaryFan, f: FiberField, params: OpticalParams) -> None:
    if f.degree != 0 or np.min(f.mode(0).real) < 0:
        return
    if np.min(params.synthesize_kernel().real) < 0:
        return
    scale = max(float(np.max(np.abs(data.value))), 1.0)
    low = float(np.min(data.value.real))
    if low < -POSITIVITY_TOL * scale:
        logger.warning("⚠️ Nonnegative source produced negative data (min %.3e)", low)


# ============================================================================
# Module-level operations
# ============================================================================

def attenuated_ray_transform(f: FiberField, a: Optional[np.ndarray], speed: SpeedField,
                             fan: Optional[BoundaryFan] = None) -> BoundaryFan:
    """``I_a f`` on the entries of a Gamma_+ fan."""
    return TransportSolver(speed, attenuation=a).ray_transform(f, fan)


def solve_free_transport(q: FiberField, a: Optional[np.ndarray], speed: SpeedField,
                         n_max: Optional[int] = None, **kwargs) -> FiberField:
    """Zero-inflow solution of ``(X + a) w = q``."""
    return TransportSolver(speed, attenuation=a, **kwargs).free_transport(q, n_max)


def forward_solve(f: FiberField, params: OpticalParams, speed: SpeedField, **kwargs) -> ForwardResult:
    """Solve ``X u + a u = S u + f`` with zero inflow."""
    return TransportSolver(speed, params, **kwargs).forward(f)


def measure(f: FiberField, params: OpticalParams, speed: SpeedField,
            fan: Optional[BoundaryFan] = None, **kwargs) -> BoundaryFan:
    """Measurement ``M_{a,k} f = u|Gamma_+``."""
    return TransportSolver(speed, params, **kwargs).measure(f, fan)


@dataclass
class NormBoundReport:
    bound: float
    c0: float
    q_inf: float
    ratios: List[float]

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.bound * (1.0 + 1e-3)


def norm_bound_check(params: OpticalParams, speed: SpeedField, trials: int = 10,
                     rng: Optional[np.random.Generator] = None, degree: int = 1,
                     solver: Optional[TransportSolver] = None) -> NormBoundReport:
    """Observed ``|Mf| / |f|`` against ``sqrt(C0) (Q_inf / delta + 1)`` for random f."""
    rng = rng or get_rng(0)
    solver = solver or TransportSolver(speed, params)
    c0 = convexity_constant(speed)
    q_inf = q_infty(params, speed.grid.mask)
    bound = float(np.sqrt(c0) * (q_inf / params.delta + 1.0))
    ratios: List[float] = []
    for _ in range(trials):
        f = random_field(speed, degree, rng)
        norm_f = l2_norm(f, speed)
        if norm_f == 0.0:
            continue
        ratios.append(solver.measure(f).norm() / norm_f)
    report = NormBoundReport(bound, c0, q_inf, ratios)
    logger.info("Norm bound: max ratio %.4g vs bound %.4g", report.max_ratio, bound)
    return report


def _graded_angle_integral(power: float, lower: float, panels: int = 48, points: int = 16) -> float:
    """``2 int_lower^{pi/2} sin(g)^power dg`` by Gauss-Legendre in ``log g``."""
    nodes, weights = np.polynomial.legendre.leggauss(points)
    edges = np.linspace(np.log(lower), np.log(np.pi / 2.0), panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        s = 0.5 * (b - a) * nodes + 0.5 * (a + b)
        gamma = np.exp(s)
        total += 0.5 * (b - a) * np.sum(weights * np.sin(gamma) ** power * gamma)
    return 2.0 * total


def trace_counterexample(eta: float, levels: int = 5, radius: float = 1.0, c0: float = 1.0,
                         initial_margin: float = 2.5e-3, refinement: float = 4.0) -> pd.DataFrame:
    """Gamma_- integrals of ``tau^(2 eta) |mu|`` and ``tau^(2 eta + 1) |mu|`` on a constant-speed disk.

    Chords are ``tau = 2 R |mu| / c0`` and ``ds_g = R dphi / c0``. The
    glancing margin shrinks by ``refinement`` per level; ``model_increment``
    is the one-dimensional model ``int mu^(2 eta + 1) d mu`` over the new
    margin band, scaled like the trace column.
    """
    if not -1.5 < eta <= 0.0:
        raise ValueError(f"eta must lie in (-3/2, 0], got {eta}")
    boundary = TWO_PI * radius / c0
    chord = 2.0 * radius / c0
    rows = []
    previous = None
    for level in range(levels):
        margin = initial_margin / refinement ** level
        lower = float(np.arcsin(margin))
        trace_val = boundary * chord ** (2 * eta) * _graded_angle_integral(2 * eta + 1, lower)
        w_val = boundary * chord ** (2 * eta + 1) * _graded_angle_integral(2 * eta + 2, lower)
        if previous is None:
            model = float("nan")
            increment = float("nan")
        else:
            p = 2 * eta + 1
            lo, hi = margin, previous
            band = np.log(hi / lo) if abs(p + 1) < 1e-12 else (hi ** (p + 1) - lo ** (p + 1)) / (p + 1)
            model = boundary * 2.0 * chord ** (2 * eta) * band
            increment = trace_val - rows[-1]["trace_integral"]
        rows.append({
            "level": level,
            "margin": margin,
            "trace_integral": trace_val,
            "w_integral": w_val,
            "trace_increment": increment,
            "model_increment": model,
        })
        previous = margin
    return pd.DataFrame(rows)


def green_identity_check(u: FiberField, speed: SpeedField, boundary_n: Optional[int] = None) -> Tuple[float, float]:
    """Both sides of ``int_SM X u dSigma^3 = int_dSM u mu dSigma^2``.

    Only modes +-1 contribute on either side.
    """
    grid = speed.grid
    xu0 = apply_eta("-", 1, u.mode(1), speed) + apply_eta("+", -1, u.mode(-1), speed)
    lhs = TWO_PI * grid.integrate(speed.nodes(xu0) / speed.nodes(speed.c) ** 2)

    nb = boundary_n or speed.domain.boundary_n
    R = speed.domain.radius
    phi = TWO_PI * np.arange(nb) / nb
    bx, by = R * np.cos(phi), R * np.sin(phi)
    c_b, _, _ = speed.profile.evaluate(bx, by)
    up = grid.sample(grid.restrict(u.mode(1)), bx, by)
    um = grid.sample(grid.restrict(u.mode(-1)), bx, by)
    fiber = np.pi * (um * np.exp(-1j * phi) + up * np.exp(1j * phi))
    rhs = np.sum(fiber * R * (TWO_PI / nb) / c_b)
    return complex(lhs).real, complex(rhs).real


def trace_bound_check(q: FiberField, speed: SpeedField, c0: Optional[float] = None) -> Dict[str, float]:
    """``|u|Gamma_+|^2`` against ``C0 |X u|^2`` for ``u = T^-1 q`` without attenuation."""
    c0 = convexity_constant(speed) if c0 is None else c0
    trace = TransportSolver(speed).ray_transform(q)
    lhs = trace.norm() ** 2
    rhs = c0 * l2_norm(q, speed) ** 2
    return {"trace_norm_sq": lhs, "bound": rhs, "ratio": lhs / rhs if rhs > 0 else 0.0}
