# core/reconstruction.py
"""
Inversion of the source problem and its gauge.

This module provides:
- GaugeRepresentative / PipelineState containers
- Fixtures: synthetic_gauge_harness, case_harness, isotropic_harness
- Step 1: recover_representative (oracle pass-through or regularized least squares)
- Step 2: step2_triangular descent, then case1_finish / case2_finish / general_finish
- Isotropic specializations: isotropic_case1, isotropic_case2
- Gauge tools: gauge_generate, gauge_verify, degree_descent_probe

Throughout, u solves ``X u + a u = S u + f`` with zero inflow, the data is
``u|Gamma_+ = I_a[f_tilde]`` and ``u = p + w`` with ``w = T^-1 f_tilde``:

    (X + a) p + f_tilde = S u + f,   p = 0 on the boundary, deg p = m - 1.
"""
import logging
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.sparse import linalg as splinalg

from core.elliptic import solve_dbar_dirichlet, solve_poisson_dirichlet, solve_poisson_neumann
from core.errors import AdmissibilityError, ConsistencyFailure, IllConditionedWarning
from core.fiber_calculus import (
    FiberField,
    OpticalParams,
    apply_S,
    apply_X,
    apply_X_perp,
    apply_eta,
    l2_norm,
    numerical_degree,
    random_field,
)
from core.transport import BoundaryFan, TransportSolver
from utils.config import (
    CONSISTENCY_TOL,
    LSQ_CONDITION_CAP,
    LSQ_POLYNOMIAL_DEGREE,
    LSQ_REGULARIZATION,
    SOLENOIDAL_BASIS_DEGREE,
)
from utils.helpers import get_rng

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
# Right sides smaller than this (relative to f_tilde) are not checked for consistency
NEGLIGIBLE_RHS = 1e-8


# ============================================================================
# Containers
# ============================================================================

@dataclass
class GaugeRepresentative:
    """``h = h0 + X_perp h_perp + sum_k h_k`` with ``h_k = (mode +k, mode -k)``."""
    h0: np.ndarray
    h_perp: np.ndarray
    h_k: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    real_flag: bool = True
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def zeros(cls, shape, real_flag: bool = True) -> "GaugeRepresentative":
        return cls(np.zeros(shape, dtype=complex), np.zeros(shape, dtype=complex), {}, real_flag)

    @property
    def degree(self) -> int:
        ks = [k for k, (hp, hm) in self.h_k.items() if np.any(hp) or np.any(hm)]
        if ks:
            return max(ks)
        return 1 if np.any(self.h_perp) else 0

    def to_field(self, speed) -> FiberField:
        shape = speed.grid.shape
        out = FiberField.from_modes({0: np.asarray(self.h0, dtype=complex)}, shape, self.real_flag)
        if np.any(self.h_perp):
            perp = FiberField.from_modes({0: np.asarray(self.h_perp, dtype=complex)}, shape, self.real_flag)
            out = out + apply_X_perp(perp, speed, zero_boundary=True)
        for k, (hp, hm) in sorted(self.h_k.items()):
            out = out + FiberField.from_modes({k: hp, -k: hm}, shape, self.real_flag)
        return out

    def kernel_residuals(self, speed) -> Dict[int, float]:
        """``R |eta h_k| / |h_k|`` per solenoidal part (zero means in H_k)."""
        out = {}
        for k, (hp, hm) in self.h_k.items():
            scale = float(np.linalg.norm(speed.nodes(hp)) + np.linalg.norm(speed.nodes(hm)))
            if scale == 0.0:
                out[k] = 0.0
                continue
            down_p = apply_eta("-", k, hp, speed)
            down_m = apply_eta("+", -k, hm, speed)
            lowered = float(np.linalg.norm(speed.nodes(down_p)) + np.linalg.norm(speed.nodes(down_m)))
            out[k] = lowered * speed.domain.radius / scale
        return out


@dataclass
class PipelineState:
    """Intermediate quantities of Step 2; ``p_modes`` maps mode index to grid."""
    f_tilde: FiberField
    w: FiberField
    sw: FiberField
    m: int
    p_modes: Dict[int, np.ndarray] = field(default_factory=dict)
    s1_plus: Optional[np.ndarray] = None
    s1_minus: Optional[np.ndarray] = None
    residuals: Dict[str, float] = field(default_factory=dict)

    def p(self, n: int) -> np.ndarray:
        return self.p_modes.get(n, np.zeros(self.w.shape, dtype=complex))

    def p_field(self) -> FiberField:
        order = max((abs(n) for n in self.p_modes), default=0)
        out = FiberField.zeros(self.w.shape, order, self.w.real_flag)
        for n, grid in self.p_modes.items():
            out.set_mode(n, grid)
        return out


@dataclass
class HarnessResult:
    f: FiberField
    data: BoundaryFan
    truth: Union[GaugeRepresentative, FiberField]
    u: FiberField
    extra: Dict[str, object] = field(default_factory=dict)


def _as_field(f_tilde, speed) -> FiberField:
    if isinstance(f_tilde, GaugeRepresentative):
        return f_tilde.to_field(speed)
    return f_tilde


def _mode_field(modes: Dict[int, np.ndarray], shape, real_flag: bool) -> FiberField:
    return FiberField.from_modes(modes, shape, real_flag)


def _solver(speed, params, solver: Optional[TransportSolver]) -> TransportSolver:
    return solver if solver is not None else TransportSolver(speed, params)


# ============================================================================
# Fixtures
# ============================================================================

def gauge_generate(p: FiberField, params: OpticalParams, speed) -> FiberField:
    """Pure-gauge source ``X p + a p - S p`` for zero-boundary ``p``."""
    xp = apply_X(p, speed, zero_boundary=True)
    return xp + p * params.a - apply_S(params, p)


def synthetic_gauge_harness(p: FiberField, h: GaugeRepresentative, params: OpticalParams, speed,
                            solver: Optional[TransportSolver] = None) -> HarnessResult:
    """Source with known representative: ``F = (X + a) p + h``, ``f = F - S T^-1 F``.

    ``data = I_a[F]`` equals ``M_{a,k} f`` because ``u = T^-1 F`` solves the
    scattering problem for ``f``.
    """
    solver = _solver(speed, params, solver)
    h_field = h.to_field(speed)
    xp = apply_X(p, speed, zero_boundary=True)
    F = xp + p * params.a + h_field
    deg_f = max(F.degree, params.m_k)
    u = solver.free_transport(F, params.m_k + deg_f + solver.n_extra)
    f = F - apply_S(params, u)
    data = solver.ray_transform(F)
    return HarnessResult(f=f, data=data, truth=h, u=u, extra={"F": F, "p": p})


def case_harness(f_true: FiberField, p: FiberField, params: OpticalParams, speed,
                 solver: Optional[TransportSolver] = None) -> HarnessResult:
    """Data of a degree <= 1 source with ``f_tilde = f + S u - (X + a) p``."""
    solver = _solver(speed, params, solver)
    result = solver.forward(f_true)
    u = result.u
    data = solver.ray_transform(apply_S(params, u) + f_true)
    f_tilde = f_true + apply_S(params, u) - gauge_generate(p, params, speed) - apply_S(params, p)
    return HarnessResult(f=f_true, data=data, truth=f_tilde, u=u,
                         extra={"p": p, "iterations": result.iterations})


def isotropic_harness(case: str, parts: Dict[str, np.ndarray], params: OpticalParams, speed,
                      solver: Optional[TransportSolver] = None) -> HarnessResult:
    """Fixtures of the isotropic cases with the representative of the integrand.

    ``case='iso1'``: parts ``f0``, ``f_perp`` (zero boundary), representative
    ``(k0 u0 + f0, f_perp)``.
    ``case='iso2'``: parts ``f0t``, ``f_perp_t`` (zero boundary), ``omega_plus``,
    ``omega_minus`` with ``f1 = X f0t + X_perp f_perp_t + omega``,
    representative ``(k0 u0 - a f0t, f_perp_t, omega)``.
    """
    solver = _solver(speed, params, solver)
    grid = speed.grid
    shape = grid.shape
    k0 = params.k0

    def masked(key):
        return np.where(grid.mask, np.asarray(parts[key], dtype=complex), 0.0)

    if case == "iso1":
        f0, f_perp = masked("f0"), masked("f_perp")
        perp = apply_X_perp(_mode_field({0: f_perp}, shape, True), speed, zero_boundary=True)
        f_true = _mode_field({0: f0}, shape, True) + perp
        u = solver.forward(f_true).u
        truth = GaugeRepresentative(k0 * u.mode(0) + f0, f_perp, {}, True)
    elif case == "iso2":
        f0t, fpt = masked("f0t"), masked("f_perp_t")
        omega = (masked("omega_plus"), masked("omega_minus"))
        scalar0 = _mode_field({0: f0t}, shape, True)
        scalarp = _mode_field({0: fpt}, shape, True)
        f_true = (apply_X(scalar0, speed, zero_boundary=True)
                  + apply_X_perp(scalarp, speed, zero_boundary=True)
                  + _mode_field({1: omega[0], -1: omega[1]}, shape, True))
        u = solver.forward(f_true).u
        truth = GaugeRepresentative(k0 * u.mode(0) - params.a * f0t, fpt, {1: omega}, True)
    else:
        raise ValueError(f"unknown isotropic case {case!r}")
    data = solver.ray_transform(apply_S(params, u) + f_true)
    return HarnessResult(f=f_true, data=data, truth=truth, u=u, extra=dict(parts))


# ============================================================================
# Step 1
# ============================================================================

def _orthonormal_columns(raw: np.ndarray, sqrt_w: np.ndarray) -> np.ndarray:
    U, S, _ = np.linalg.svd(sqrt_w[:, None] * raw, full_matrices=False)
    keep = S > 1e-10 * S[0]
    return U[:, keep] / sqrt_w[:, None]


def solenoidal_basis(k: int, speed, degree: int = SOLENOIDAL_BASIS_DEGREE) -> Tuple[np.ndarray, np.ndarray]:
    """Orthonormal mask-node bases of the mode ``+k`` and ``-k`` parts of H_k.

    Mode ``+k`` uses ``c^k z^j`` and mode ``-k`` uses ``c^k conj(z)^j``, both
    annihilated by the lowering operator, orthonormalized under ``c^-2 dx``.
    """
    grid = speed.grid
    c = speed.nodes(speed.c)
    z = (grid.node_x + 1j * grid.node_y) / grid.radius
    sqrt_w = np.sqrt(grid.node_weights / c ** 2)
    bases = []
    for zz in (z, np.conj(z)):
        raw = np.stack([c ** k * zz ** j for j in range(degree + 1)], axis=1)
        bases.append(_orthonormal_columns(raw, sqrt_w))
    return bases[0], bases[1]


def polynomial_basis(speed, degree: int = LSQ_POLYNOMIAL_DEGREE,
                     zero_boundary: bool = False) -> np.ndarray:
    """Orthonormal mask-node basis of polynomials of total degree ``<= degree``.

    With ``zero_boundary`` every monomial is multiplied by ``1 - r^2 / R^2``.
    Columns are orthonormal under ``c^-2 dx``.
    """
    grid = speed.grid
    c = speed.nodes(speed.c)
    X, Y = grid.node_x / grid.radius, grid.node_y / grid.radius
    bump = 1.0 - X ** 2 - Y ** 2 if zero_boundary else np.ones_like(X)
    raw = np.stack([bump * X ** i * Y ** (total - i)
                    for total in range(degree + 1) for i in range(total + 1)], axis=1)
    return _orthonormal_columns(raw, np.sqrt(grid.node_weights / c ** 2))


def _perp_operators(speed):
    """Mask-node maps ``h_perp -> (X_perp h_perp)_{+1}`` and ``_{-1}``."""
    grid = speed.grid
    d0, dbar0 = grid.wirtinger(zero_boundary=True)
    c = sparse.diags(speed.nodes(speed.c))
    return (-1j * (c @ d0)).tocsr(), (1j * (c @ dbar0)).tocsr()


def recover_representative(data: BoundaryFan, params: OpticalParams, speed, m: int = 1,
                           backend: str = "lsq", truth=None, *, solenoidal: bool = True,
                           regularization: float = LSQ_REGULARIZATION,
                           basis_degree: int = SOLENOIDAL_BASIS_DEGREE,
                           polynomial_degree: int = LSQ_POLYNOMIAL_DEGREE,
                           condition_cap: float = LSQ_CONDITION_CAP,
                           solver: Optional[TransportSolver] = None) -> GaugeRepresentative:
    """Representative ``h`` of the data in the gauge of ``I_a``.

    The least-squares backend expands ``h0`` in polynomials, ``h_perp`` in
    polynomials vanishing on the boundary and each H_k block in
    ``solenoidal_basis``. Only the images of these columns under ``I_a`` are
    formed, so the dense system has a few hundred columns at any grid size.
    It is solved by damped LSMR with ``damp = sqrt(regularization)`` times
    the largest column norm.

    Args:
        data: Gamma_+ fan carrying ``I_a f_tilde``
        params: Optical parameters (their attenuation defines ``I_a``)
        speed: SpeedField
        m: Degree of the representative (number of H_k blocks)
        backend: ``"oracle"`` returns ``truth``; ``"lsq"`` solves the damped least-squares problem
        truth: Ground truth for the oracle backend
        solenoidal: Include the H_k blocks
        polynomial_degree: Total degree of the h0 and h_perp spaces

    Returns:
        GaugeRepresentative with ``diagnostics`` (condition number, data misfit)
    """
    if backend == "oracle":
        if truth is None:
            raise ValueError("oracle backend needs the harness ground truth")
        return truth
    if backend != "lsq":
        raise ValueError(f"unknown backend {backend!r}")

    solver = _solver(speed, params, solver)
    sweep = solver.fan_sweep(data)
    grid = speed.grid
    basis_0 = polynomial_basis(speed, polynomial_degree)
    basis_perp = polynomial_basis(speed, polynomial_degree, zero_boundary=True)
    perp_plus, perp_minus = _perp_operators(speed)
    blocks = [
        sweep.matrix(0) @ basis_0,
        sweep.matrix(1) @ (perp_plus @ basis_perp) + sweep.matrix(-1) @ (perp_minus @ basis_perp),
    ]
    layout = [("h0", 0, basis_0), ("h_perp", 0, basis_perp)]
    if solenoidal:
        for k in range(1, m + 1):
            basis_p, basis_m = solenoidal_basis(k, speed, basis_degree)
            blocks.append(sweep.matrix(k) @ basis_p)
            layout.append(("plus", k, basis_p))
            blocks.append(sweep.matrix(-k) @ basis_m)
            layout.append(("minus", k, basis_m))

    sqrt_w = np.sqrt(data.weight)
    A = sqrt_w[:, None] * np.hstack([np.asarray(block) for block in blocks])
    b = sqrt_w * data.value
    singular = np.linalg.svd(A, compute_uv=False)
    scale = float(np.max(np.linalg.norm(A, axis=0))) if A.size else 0.0
    damp = np.sqrt(regularization) * scale
    lam = damp ** 2
    smallest = singular[-1] ** 2 + lam
    condition = float((singular[0] ** 2 + lam) / smallest) if smallest > 0 else float("inf")
    if condition > condition_cap:
        warnings.warn(
            f"least-squares normal system condition {condition:.3e} exceeds {condition_cap:.1e}",
            IllConditionedWarning,
            stacklevel=2,
        )
    x, istop, itn = splinalg.lsmr(A, b, damp=damp, atol=1e-14, btol=1e-14,
                                  maxiter=20 * A.shape[1])[:3]
    logger.debug("LSMR stop %d after %d iterations", istop, itn)

    real = params.kernel_is_real and bool(np.allclose(data.value.imag, 0.0))
    rep = GaugeRepresentative.zeros(grid.shape, real_flag=real)
    offset = 0
    for kind, k, basis in layout:
        coef = x[offset:offset + basis.shape[1]]
        offset += basis.shape[1]
        values = basis @ coef
        values = grid.prolong(values.real if real and kind in ("h0", "h_perp") else values)
        if kind == "h0":
            rep.h0 = values
        elif kind == "h_perp":
            rep.h_perp = values
        else:
            hp, hm = rep.h_k.get(k, (np.zeros(grid.shape, dtype=complex), np.zeros(grid.shape, dtype=complex)))
            rep.h_k[k] = (values, hm) if kind == "plus" else (hp, values)

    misfit = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
    rep.diagnostics = {"condition": condition, "misfit": misfit, "lambda": lam, "unknowns": int(A.shape[1])}
    logger.info("Step 1 least squares: %d unknowns, cond %.3e, misfit %.3e", A.shape[1], condition, misfit)
    return rep


# ============================================================================
# Step 2
# ============================================================================

def step2_triangular(f_tilde, params: OpticalParams, speed, m: int,
                     solver: Optional[TransportSolver] = None,
                     consistency_tol: float = CONSISTENCY_TOL) -> PipelineState:
    """Recover ``w = T^-1 f_tilde`` and ``p_{m-1}, ..., p_1`` in descending order.

    On mode ``j >= 2``: ``X_+ p_{j-1} = (S w)_j - f_j - X_- p_{j+1} - (a - S) p_j``,
    solved per sign with ``solve_dbar_dirichlet``.

    Raises:
        ConsistencyFailure: if a dbar residual exceeds ``consistency_tol``
    """
    solver = _solver(speed, params, solver)
    ft = _as_field(f_tilde, speed)
    w = solver.free_transport(ft)
    sw = apply_S(params, w)
    state = PipelineState(f_tilde=ft, w=w, sw=sw, m=m)
    scale = l2_norm(ft, speed)

    for j in range(m, 1, -1):
        for sign in (1, -1):
            jj = sign * j
            h = sw.mode(jj) - ft.mode(jj) - (params.a - params.k_mode(jj)) * state.p(jj)
            upper = state.p(jj + sign)
            if np.any(upper):
                lower = apply_eta("-" if sign > 0 else "+", jj + sign, upper, speed, zero_boundary=True)
                h = h - lower
            p_new, residual = solve_dbar_dirichlet(sign * (j - 1), h, speed, "+" if sign > 0 else "-")
            state.p_modes[sign * (j - 1)] = p_new
            key = f"p{sign * (j - 1):+d}"
            h_size = float(np.linalg.norm(speed.nodes(h)) * speed.grid.h)
            state.residuals[key] = residual if h_size > NEGLIGIBLE_RHS * max(scale, 1e-300) else 0.0

    bad = {k: v for k, v in state.residuals.items() if v > consistency_tol}
    if bad:
        raise ConsistencyFailure(f"dbar residuals above {consistency_tol}: {bad}", state.residuals)
    return state


def case1_finish(state: PipelineState, f_tilde, params: OpticalParams, speed,
                 boundary_n: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Recover ``(f0, f_perp)`` for sources ``f0 + X_perp f_perp``.

    ``Delta_g p0 = 2 (eta_- s+ + eta_+ s-)`` (Dirichlet) and
    ``Delta_g f_perp = (2/i)(eta_- s+ - eta_+ s-)`` with g-normal data
    ``-i (s+ e^{i phi} - s- e^{-i phi})``.
    """
    ft = state.f_tilde if f_tilde is None else _as_field(f_tilde, speed)
    grid = speed.grid
    sw = state.sw

    def side(sign):
        n = sign
        s = sw.mode(n) - ft.mode(n) - (params.a - params.k_mode(n)) * state.p(n)
        upper = state.p(n + sign)
        if np.any(upper):
            s = s - apply_eta("-" if sign > 0 else "+", n + sign, upper, speed, zero_boundary=True)
        return s

    s_plus, s_minus = side(1), side(-1)
    state.s1_plus, state.s1_minus = s_plus, s_minus
    A = apply_eta("-", 1, s_plus, speed)
    B = apply_eta("+", -1, s_minus, speed)

    p0 = solve_poisson_dirichlet(2.0 * (A + B), speed)
    nb = boundary_n or 2 * speed.domain.boundary_n
    R = speed.domain.radius
    phi = TWO_PI * np.arange(nb) / nb
    bx, by = R * np.cos(phi), R * np.sin(phi)
    sp_b = grid.sample(grid.restrict(s_plus), bx, by)
    sm_b = grid.sample(grid.restrict(s_minus), bx, by)
    neumann = -1j * (sp_b * np.exp(1j * phi) - sm_b * np.exp(-1j * phi))
    real = ft.real_flag
    if real:
        neumann = neumann.real
    f_perp = solve_poisson_neumann(-2j * (A - B), neumann, speed)

    if real:
        p0, f_perp = p0.real, np.real(f_perp)
    state.p_modes[0] = p0
    xm_p1 = np.zeros(grid.shape, dtype=complex)
    if np.any(state.p(1)):
        xm_p1 += apply_eta("-", 1, state.p(1), speed, zero_boundary=True)
    if np.any(state.p(-1)):
        xm_p1 += apply_eta("+", -1, state.p(-1), speed, zero_boundary=True)
    f0 = xm_p1 + params.sigma_a * p0 - sw.mode(0) + ft.mode(0)
    f0 = np.where(grid.mask, f0, 0.0)
    return (f0.real if real else f0), f_perp


def case2_finish(state: PipelineState, f_tilde, params: OpticalParams, speed) -> FiberField:
    """Recover a vector-field source ``f1`` (modes +-1).

    ``p0 = [(S w)_0 - f_0 - X_- p_1] / sigma_a`` and
    ``f_1 = X_+ p0 + X_- p_2 + (a - S) p_1 - (S w)_1 + f_1``.
    """
    ft = state.f_tilde if f_tilde is None else _as_field(f_tilde, speed)
    grid = speed.grid
    sw = state.sw
    xm_p1 = np.zeros(grid.shape, dtype=complex)
    if np.any(state.p(1)):
        xm_p1 += apply_eta("-", 1, state.p(1), speed, zero_boundary=True)
    if np.any(state.p(-1)):
        xm_p1 += apply_eta("+", -1, state.p(-1), speed, zero_boundary=True)
    sigma = np.where(grid.mask, params.sigma_a, 1.0)
    p0 = np.where(grid.mask, (sw.mode(0) - ft.mode(0) - xm_p1) / sigma, 0.0)
    state.p_modes[0] = p0

    out = {}
    for sign in (1, -1):
        n = sign
        value = (apply_eta("+" if sign > 0 else "-", 0, p0, speed)
                 + (params.a - params.k_mode(n)) * state.p(n)
                 - sw.mode(n) + ft.mode(n))
        upper = state.p(2 * sign)
        if np.any(upper):
            value = value + apply_eta("-" if sign > 0 else "+", 2 * sign, upper, speed, zero_boundary=True)
        out[n] = np.where(grid.mask, value, 0.0)
    return _mode_field(out, grid.shape, ft.real_flag)


def general_finish(state: PipelineState, params: OpticalParams, speed) -> FiberField:
    """Source ``f_tilde - S w``, gauge-equivalent to the true ``f``."""
    return state.f_tilde - state.sw


# ============================================================================
# Isotropic cases
# ============================================================================

def _require_isotropic(params: OpticalParams) -> None:
    if params.m_k != 0:
        raise AdmissibilityError(f"isotropic reconstruction needs a degree-0 kernel, got m_k={params.m_k}")


def isotropic_case1(data: BoundaryFan, params: OpticalParams, speed, backend: str = "lsq",
                    truth: Optional[GaugeRepresentative] = None,
                    solver: Optional[TransportSolver] = None, **lsq) -> Tuple[np.ndarray, np.ndarray]:
    """``(f0, f_perp)`` from ``I_a[k0 u0 + f0 + X_perp f_perp]``."""
    _require_isotropic(params)
    solver = _solver(speed, params, solver)
    rep = recover_representative(data, params, speed, m=1, backend=backend, truth=truth,
                                 solenoidal=False, solver=solver, **lsq)
    integrand = rep.to_field(speed)
    u = solver.free_transport(integrand)
    f0 = np.where(speed.grid.mask, rep.h0 - params.k0 * u.mode(0), 0.0)
    if rep.real_flag:
        f0 = f0.real
    return f0, rep.h_perp


def isotropic_case2(data: BoundaryFan, params: OpticalParams, speed, backend: str = "lsq",
                    truth: Optional[GaugeRepresentative] = None,
                    solver: Optional[TransportSolver] = None, **lsq) -> FiberField:
    """Vector-field source from ``I_a[(k0 u0 - a f0t) + X_perp f_perp_t + omega]``.

    With ``d = T^-1`` of that integrand, ``d_0 = u_0 - f0t`` and
    ``f0t = (g0 - k0 d_0) / (k0 - a)``.
    """
    _require_isotropic(params)
    solver = _solver(speed, params, solver)
    grid = speed.grid
    rep = recover_representative(data, params, speed, m=1, backend=backend, truth=truth,
                                 solver=solver, **lsq)
    d = solver.free_transport(rep.to_field(speed))
    k0 = params.k0
    denom = np.where(grid.mask, k0 - params.a, -1.0)
    f0t = np.where(grid.mask, (rep.h0 - k0 * d.mode(0)) / denom, 0.0)
    if rep.real_flag:
        f0t = f0t.real
    shape = grid.shape
    scalar0 = _mode_field({0: f0t}, shape, rep.real_flag)
    scalarp = _mode_field({0: rep.h_perp}, shape, rep.real_flag)
    omega = rep.h_k.get(1, (np.zeros(shape, dtype=complex), np.zeros(shape, dtype=complex)))
    f1 = (apply_X(scalar0, speed, zero_boundary=True)
          + apply_X_perp(scalarp, speed, zero_boundary=True)
          + _mode_field({1: omega[0], -1: omega[1]}, shape, rep.real_flag))
    return f1.padded(1)


def iso2_elimination_identity(samples: int = 25, seed: int = 0) -> Dict[str, bool]:
    """Exact rational check of the elimination of ``u0``.

    ``corrected``: ``(k0 u0 - a f0) - k0 (u0 - f0) == (k0 - a) f0`` always.
    ``printed``: whether ``(k0 u0 - a f0)/(k0 - a) - k0 (u0 - f0) == f0`` held on every sample.
    """
    rng = get_rng(seed)

    def rational():
        return Fraction(int(rng.integers(-50, 51)), int(rng.integers(1, 20)))

    corrected = True
    printed = True
    for _ in range(samples):
        k0, a, u0, f0 = rational(), rational(), rational(), rational()
        if k0 == a:
            continue
        corrected &= (k0 * u0 - a * f0) - k0 * (u0 - f0) == (k0 - a) * f0
        printed &= (k0 * u0 - a * f0) / (k0 - a) - k0 * (u0 - f0) == f0
    return {"corrected": bool(corrected), "printed": bool(printed)}


# ============================================================================
# Gauge characterization
# ============================================================================

def gauge_verify(f: FiberField, params: OpticalParams, speed,
                 solver: Optional[TransportSolver] = None) -> float:
    """``|M f|_{L2(Gamma_+)} / |f|``, zero for ``f = 0``."""
    norm_f = l2_norm(f, speed)
    if norm_f == 0.0:
        return 0.0
    solver = _solver(speed, params, solver)
    return solver.measure(f).norm() / norm_f


def gauge_theorem_check(p0: np.ndarray, params: OpticalParams, speed) -> float:
    """Relative gap between ``gauge_generate(p0)`` and ``(X + sigma_a) p0`` (isotropic kernels)."""
    shape = speed.grid.shape
    p = _mode_field({0: p0}, shape, True)
    generated = gauge_generate(p, params, speed)
    direct = apply_X(p, speed, zero_boundary=True) + p * params.sigma_a
    scale = l2_norm(direct, speed)
    return l2_norm(generated - direct, speed) / scale if scale > 0 else 0.0


@dataclass
class DescentReport:
    """Per-iterate degrees of a pure-gauge forward solve.

    ``stages`` holds one row per source iteration ``u_j = T^-1 (S u_{j-1} + f)``
    with the numerical degree of ``u_j`` and of its right side. ``bounds``
    lists the a priori degree bounds of the induction, from the kernel degree
    down to ``m - 1``.
    """
    regime: str
    source_degree: int
    kernel_degree: int
    stages: pd.DataFrame
    bounds: pd.DataFrame

    @property
    def degrees(self) -> np.ndarray:
        return self.stages["numerical_degree"].to_numpy(dtype=int)

    @property
    def monotone(self) -> bool:
        values = self.degrees
        return bool(np.all(np.diff(values) <= 0)) if values.size else True

    @property
    def terminal_degree(self) -> Optional[int]:
        if self.stages.empty:
            return None
        return int(self.degrees[-1])

    @property
    def within_bound(self) -> bool:
        if self.bounds.empty:
            return True
        return self.terminal_degree <= int(self.bounds["degree_bound"].iloc[-1])


def _induction_bounds(m: int, n: int) -> pd.DataFrame:
    # S u + f has degree <= max(m, b) when u has degree b, so u drops to max(m, b) - 1.
    rows = []
    bound = n
    stage = 0
    while True:
        rhs_bound = max(m, bound)
        bound = rhs_bound - 1
        rows.append({"stage": stage, "rhs_degree_bound": rhs_bound, "degree_bound": bound})
        stage += 1
        if bound <= m - 1:
            break
    return pd.DataFrame(rows, columns=["stage", "rhs_degree_bound", "degree_bound"])


def degree_descent_probe(params: OpticalParams, speed, m: int, n: Optional[int] = None,
                         rng: Optional[np.random.Generator] = None, degree_tol: float = 1e-2,
                         solver: Optional[TransportSolver] = None) -> DescentReport:
    """Track the numerical degree of the source iterates for a pure-gauge source.

    The source is ``(X + a - S) p`` with ``p`` of degree ``m - 1`` vanishing on
    the boundary, so the iterates converge to ``u = p``. Each row records the
    degree of one iterate and of the right side it was swept from.

    Args:
        params: Admissible optical parameters.
        speed: Speed field on the disk grid.
        m: Source degree; ``m <= 0`` has no pure gauge.
        n: Kernel degree used for the induction bounds (defaults to ``params.m_k``).
        rng: Generator for the gauge potential.
        degree_tol: Relative mode norm below which a mode does not count.
        solver: Reused transport solver.

    Returns:
        DescentReport with the per-iterate table and the induction bounds.
    """
    n = params.m_k if n is None else n
    columns = ["stage", "update", "rhs_numerical_degree", "numerical_degree"]
    if m <= 0:
        logger.info("Degree descent: m = 0, no pure gauge exists (injective regime)")
        return DescentReport("injective", m, n, pd.DataFrame(columns=columns),
                             pd.DataFrame(columns=["stage", "rhs_degree_bound", "degree_bound"]))

    rng = rng or get_rng(0)
    solver = _solver(speed, params, solver)
    p = random_field(speed, m - 1, rng, zero_boundary=True)
    f = gauge_generate(p, params, speed)

    rows = []
    previous: Dict[str, FiberField] = {}

    def record(iteration: int, u: FiberField, rhs: FiberField) -> None:
        last = previous.get("u")
        if last is None:
            update = 1.0
        else:
            scale = l2_norm(u, speed)
            update = l2_norm(u - last, speed) / scale if scale > 0 else 0.0
        previous["u"] = u
        rows.append({
            "stage": iteration,
            "update": update,
            "rhs_numerical_degree": numerical_degree(rhs, speed, degree_tol),
            "numerical_degree": numerical_degree(u, speed, degree_tol),
        })

    solver.forward(f, on_iterate=record)
    report = DescentReport("gauge", m, n, pd.DataFrame(rows, columns=columns), _induction_bounds(m, n))
    logger.info("Degree descent: %d iterate(s), degree %d -> %d (target %d)",
                len(rows), int(report.degrees[0]), report.terminal_degree, m - 1)
    return report


# ============================================================================
# Orchestration
# ============================================================================

@dataclass
class ReconstructionResult:
    case: str
    source: FiberField
    parts: Dict[str, np.ndarray]
    representative: GaugeRepresentative
    state: Optional[PipelineState] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)


def reconstruct(data: BoundaryFan, params: OpticalParams, speed, case: str, backend: str = "lsq",
                truth=None, m: Optional[int] = None, solver: Optional[TransportSolver] = None,
                consistency_tol: float = CONSISTENCY_TOL, **lsq) -> ReconstructionResult:
    """Run Step 1, Step 2 and the finisher selected by ``case``."""
    solver = _solver(speed, params, solver)
    shape = speed.grid.shape
    m = max(1, params.m_k) if m is None else m

    if case == "iso1":
        f0, f_perp = isotropic_case1(data, params, speed, backend, truth, solver, **lsq)
        perp = apply_X_perp(_mode_field({0: f_perp}, shape, True), speed, zero_boundary=True)
        source = _mode_field({0: f0}, shape, True) + perp
        return ReconstructionResult(case, source, {"f0": f0, "f_perp": f_perp}, truth or GaugeRepresentative.zeros(shape))
    if case == "iso2":
        f1 = isotropic_case2(data, params, speed, backend, truth, solver, **lsq)
        return ReconstructionResult(case, f1, {}, truth or GaugeRepresentative.zeros(shape))

    if backend == "oracle":
        if truth is None:
            raise ValueError("oracle backend needs the harness ground truth")
        rep_or_field = truth
        rep = truth if isinstance(truth, GaugeRepresentative) else GaugeRepresentative.zeros(shape)
    else:
        rep = recover_representative(data, params, speed, m=m, backend="lsq", solver=solver, **lsq)
        rep_or_field = rep
    state = step2_triangular(rep_or_field, params, speed, m, solver=solver, consistency_tol=consistency_tol)

    if case == "1":
        f0, f_perp = case1_finish(state, None, params, speed)
        perp = apply_X_perp(_mode_field({0: f_perp}, shape, state.f_tilde.real_flag), speed)
        source = _mode_field({0: f0}, shape, state.f_tilde.real_flag) + perp
        parts = {"f0": f0, "f_perp": f_perp, "p0": state.p(0)}
    elif case == "2":
        source = case2_finish(state, None, params, speed)
        parts = {"p0": state.p(0)}
    elif case == "general":
        source = general_finish(state, params, speed)
        parts = {}
    else:
        raise ValueError(f"unknown case {case!r}")
    return ReconstructionResult(case, source, parts, rep, state, dict(state.residuals))
