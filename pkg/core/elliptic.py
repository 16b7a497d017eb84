# core/elliptic.py
"""
Elliptic solves behind the inversion pipeline.

This module provides:
- solve_poisson_dirichlet: Delta_g p = rhs with Dirichlet data
- solve_poisson_neumann: g-normal Neumann data, zero g-mean gauge
- solve_dbar_dirichlet: eta_+/- p = h with p = 0 on the boundary
- hodge_decompose: degree-one fields as X f0 + X_perp f_perp + omega
- solenoidal_project: u = X_+ v + g with g annihilated by X_-

Delta_g = c^2 Delta in the flat chart, discretized by the Shortley-Weller
stencil of ``DiskGrid``. Systems are solved with sparse LU.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from core.errors import CompatibilityWarning
from core.fiber_calculus import (
    FiberField,
    _sign,
    apply_X,
    apply_X_minus,
    apply_X_perp,
    apply_X_plus,
    apply_eta,
    inner,
    l2_norm,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
COMPATIBILITY_RTOL = 1e-3


def _norm(grid_values: np.ndarray, speed) -> float:
    """L2(M, dA_g) norm of a full grid."""
    v = speed.nodes(grid_values)
    return float(np.sqrt(speed.grid.integrate(np.abs(v) ** 2 / speed.nodes(speed.c) ** 2)))


def _lu_solve(lu, rhs: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(rhs):
        return lu.solve(np.ascontiguousarray(rhs.real)) + 1j * lu.solve(np.ascontiguousarray(rhs.imag))
    return lu.solve(np.ascontiguousarray(rhs))


def _solve_flat(rhs_nodes: np.ndarray, speed) -> np.ndarray:
    """Mask-node solution of the flat ``Delta q = rhs`` with ``q = 0`` on the circle."""
    return _lu_solve(speed.grid.laplacian_lu, rhs_nodes)


# ============================================================================
# Poisson problems
# ============================================================================

def solve_poisson_dirichlet(rhs: np.ndarray, speed, boundary: Optional[Callable] = None) -> np.ndarray:
    """Solve ``Delta_g p = rhs`` with ``p = boundary(x, y)`` on the circle (default 0).

    Args:
        rhs: Full grid (real or complex)
        speed: SpeedField
        boundary: Optional callable of boundary coordinates

    Returns:
        Full grid, zero off the mask
    """
    grid = speed.grid
    b = speed.nodes(np.asarray(rhs)) / speed.nodes(speed.c) ** 2
    if boundary is not None:
        b = b - grid.dirichlet_lift(boundary)
        if np.allclose(b.imag, 0.0) and not np.iscomplexobj(rhs):
            b = b.real
    return grid.prolong(_solve_flat(b, speed))


def _boundary_samples(bdry, n_samples: int) -> np.ndarray:
    phi = TWO_PI * np.arange(n_samples) / n_samples
    if bdry is None:
        return np.zeros(n_samples)
    if callable(bdry):
        return np.asarray(bdry(phi))
    return np.asarray(bdry)


def solve_poisson_neumann(rhs: np.ndarray, bdry: Union[np.ndarray, Callable, None], speed,
                          boundary_n: Optional[int] = None,
                          rtol: float = COMPATIBILITY_RTOL) -> np.ndarray:
    """Solve ``Delta_g p = rhs`` with g-normal derivative ``bdry`` and zero g-mean.

    ``bdry`` is either samples at ``phi_j = 2 pi j / len(bdry)`` or a callable
    of the polar angle. Incompatible data is projected and reported with a
    CompatibilityWarning.
    """
    grid = speed.grid
    R = speed.domain.radius
    rhs = np.asarray(rhs)
    if callable(bdry) or bdry is None:
        n_samples = boundary_n or speed.domain.boundary_n
    else:
        n_samples = len(bdry)
    values = _boundary_samples(bdry, n_samples)
    phi = TWO_PI * np.arange(n_samples) / n_samples
    c_b, _, _ = speed.profile.evaluate(R * np.cos(phi), R * np.sin(phi))

    p_dirichlet = solve_poisson_dirichlet(rhs, speed)

    # Target and Dirichlet-part coefficients of the flat radial derivative
    target = np.fft.fft(values / c_b) / n_samples
    z = (grid.node_x + 1j * grid.node_y) / R
    source = speed.nodes(rhs) / speed.nodes(speed.c) ** 2
    max_n = n_samples // 2 - 1

    defect = target[0] - grid.integrate(source) / (TWO_PI * R)
    scale = max(abs(target[0]), float(np.max(np.abs(target))), abs(grid.integrate(np.abs(source))) / (TWO_PI * R))
    if scale > 0 and abs(defect) > rtol * scale:
        warnings.warn(
            f"Neumann data incompatible with right-hand side (defect {abs(defect):.3e}); projected",
            CompatibilityWarning,
            stacklevel=2,
        )

    harmonic = np.zeros(grid.n_nodes, dtype=complex)
    for n in range(1, max_n + 1):
        for m, basis in ((n, z ** n), (-n, np.conj(z) ** n)):
            d_hat = grid.integrate(source * np.conj(basis)) / (TWO_PI * R)
            b_hat = target[m % n_samples] - d_hat
            harmonic += b_hat * (R / n) * basis

    p = speed.nodes(p_dirichlet) + harmonic
    weights = grid.node_weights / speed.nodes(speed.c) ** 2
    p = p - np.sum(p * weights) / np.sum(weights)
    if not np.iscomplexobj(rhs) and np.isrealobj(values):
        p = p.real
    return grid.prolong(p)


# ============================================================================
# Cauchy-Riemann type problems
# ============================================================================

def solve_dbar_dirichlet(k: int, h_next: np.ndarray, speed, sign="+") -> Tuple[np.ndarray, float]:
    """Zero-boundary ``p`` on mode ``k`` with ``eta_+/- p = h_next``.

    '+' solves ``Delta(c^k p) = 4 dbar(c^(k-1) h)``; '-' solves
    ``Delta(c^-k p) = 4 d(c^(-k-1) h)``. The residual
    ``|eta p - h| / |h|`` flags data outside the range (0 when ``h = 0``).
    """
    s = _sign(sign)
    grid = speed.grid
    h = np.asarray(h_next, dtype=complex)
    if not np.any(speed.nodes(h)):
        return np.zeros(grid.shape, dtype=complex), 0.0
    c = speed.nodes(speed.c)
    d, dbar = grid.wirtinger()
    hv = speed.nodes(h)
    if s > 0:
        q = _solve_flat(4.0 * (dbar @ (c ** (k - 1) * hv)), speed)
        p = q / c ** k
    else:
        q = _solve_flat(4.0 * (d @ (c ** (-k - 1) * hv)), speed)
        p = q * c ** k
    p_grid = grid.prolong(p)
    check = apply_eta(s, k, p_grid, speed, zero_boundary=True)
    residual = _norm(check - h, speed) / _norm(h, speed)
    return p_grid, float(residual)


# ============================================================================
# Decompositions of degree-k fields
# ============================================================================

@dataclass
class HodgeParts:
    f0: np.ndarray
    f_perp: np.ndarray
    omega: FiberField
    kernel_residual: float
    xminus_residual: float
    recomposition_error: float


def hodge_decompose(f1: FiberField, speed) -> HodgeParts:
    """``f1 = X f0 + X_perp f_perp + omega`` with zero-boundary ``f0, f_perp``.

    With ``A = eta_- f_1`` and ``B = eta_+ f_-1``:
    ``Delta_g f0 = 2 (A + B)`` and ``Delta_g f_perp = 2i (A - B)``.
    """
    grid = speed.grid
    shape = grid.shape
    if not np.any(f1.mode(1)) and not np.any(f1.mode(-1)):
        zero = np.zeros(shape)
        return HodgeParts(zero, zero.copy(), FiberField.zeros(shape, 1, f1.real_flag), 0.0, 0.0, 0.0)

    A = apply_eta("-", 1, f1.mode(1), speed)
    B = apply_eta("+", -1, f1.mode(-1), speed)
    f0 = solve_poisson_dirichlet(2.0 * (A + B), speed)
    f_perp = solve_poisson_dirichlet(2j * (A - B), speed)
    if f1.real_flag:
        f0, f_perp = f0.real, f_perp.real

    f1_only = FiberField.from_modes({1: f1.mode(1), -1: f1.mode(-1)}, shape, f1.real_flag)
    scalar0 = FiberField.from_modes({0: f0}, shape, f1.real_flag)
    scalarp = FiberField.from_modes({0: f_perp}, shape, f1.real_flag)
    exact_part = apply_X(scalar0, speed, zero_boundary=True) + apply_X_perp(scalarp, speed, zero_boundary=True)
    omega = (f1_only - exact_part).padded(1)

    scale = l2_norm(f1_only, speed)
    eta_minus = apply_eta("-", 1, omega.mode(1), speed)
    eta_plus = apply_eta("+", -1, omega.mode(-1), speed)
    kernel_residual = (_norm(eta_minus, speed) + _norm(eta_plus, speed)) / scale
    xminus_residual = _norm(eta_minus + eta_plus, speed) / scale
    recomposed = exact_part + omega
    recomposition_error = l2_norm(recomposed - f1_only, speed) / scale
    logger.debug("Hodge residuals: kernel %.3e, X_- %.3e", kernel_residual, xminus_residual)
    return HodgeParts(f0, f_perp, omega, kernel_residual, xminus_residual, recomposition_error)


@dataclass
class SolenoidalParts:
    v: FiberField
    g: FiberField
    orthogonality: float
    kernel_residual: float


def _twisted_operator(k: int, sign: int, speed) -> sparse.csr_matrix:
    """``eta_-+ eta_+-`` on mode ``+-(k-1)`` as an operator on ``q = c^(k-1) v``."""
    grid = speed.grid
    profile = speed.profile
    n = k - 1
    c = speed.nodes(speed.c)

    def sigma(x, y):
        cc, _, _ = profile.evaluate(x, y)
        return cc ** (-2 * n)

    sx = -2 * n * c ** (-2 * n - 1) * speed.nodes(speed.dcx)
    sy = -2 * n * c ** (-2 * n - 1) * speed.nodes(speed.dcy)
    div = grid.divergence_form(sigma)
    if sign > 0:
        twist = sparse.diags(sy) @ grid.dx0 - sparse.diags(sx) @ grid.dy0
    else:
        twist = sparse.diags(sx) @ grid.dy0 - sparse.diags(sy) @ grid.dx0
    return (sparse.diags(0.25 * c ** (k + 1)) @ (div + 1j * twist)).tocsc()


def solenoidal_project(u: FiberField, k: int, speed) -> SolenoidalParts:
    """Split ``u`` on modes ``+-k`` as ``X_+ v + g`` through ``X_- X_+ v = X_- u``."""
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    grid = speed.grid
    shape = grid.shape
    uk = FiberField.from_modes({k: u.mode(k), -k: u.mode(-k)}, shape, u.real_flag)
    scale = l2_norm(uk, speed)
    v = FiberField.zeros(shape, k - 1, u.real_flag)
    if scale == 0.0:
        return SolenoidalParts(v, uk, 0.0, 0.0)

    if k == 1:
        rhs = apply_eta("-", 1, uk.mode(1), speed) + apply_eta("+", -1, uk.mode(-1), speed)
        v0 = solve_poisson_dirichlet(2.0 * rhs, speed)
        v.set_mode(0, v0.real if u.real_flag else v0)
    else:
        c = speed.nodes(speed.c)
        for sign, mode in ((1, k), (-1, -k)):
            source = uk.mode(mode)
            if not np.any(source):
                continue
            if sign > 0:
                rhs = apply_eta("-", k, source, speed)
            else:
                rhs = apply_eta("+", -k, source, speed)
            q = splu(_twisted_operator(k, sign, speed)).solve(speed.nodes(rhs).astype(complex))
            v.set_mode(sign * (k - 1), grid.prolong(q / c ** (k - 1)))

    xv = apply_X_plus(v, speed, zero_boundary=True)
    g = (uk - xv).padded(k)
    orthogonality = abs(inner(xv, g, speed)) / scale ** 2
    kernel_residual = l2_norm(apply_X_minus(g, speed), speed) / scale
    logger.debug("Solenoidal split k=%d: orthogonality %.3e", k, orthogonality)
    return SolenoidalParts(v, g, orthogonality, kernel_residual)
