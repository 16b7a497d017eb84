# core/fiber_calculus.py
"""
Functions on the unit circle bundle as fiberwise Fourier modes.

This module provides:
- FiberField: modes u_n(x), n = -N..N, stored as one complex array
- OpticalParams: attenuation, scattering kernel modes and subcriticality margin
- synthesize / decompose between modes and equispaced angle samples
- The frame operators X, X_perp, V, eta_+/-, X_+/- and the scattering operator S
- L2 structure, Q_infinity and the accretivity gap

Only eta_+/- touch the spatial grid:

    eta_+ u_n = c d(u_n) + n (dc) u_n       (lands on mode n+1)
    eta_- u_n = c dbar(u_n) - n (dbar c) u_n   (lands on mode n-1)

with X = eta_+ + eta_-, X_perp = -i (eta_+ - eta_-) and V u_n = i n u_n.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple, Union

import numpy as np

from core.errors import AdmissibilityError, AliasError
from utils.config import ADMISSIBILITY_TOL, DEGREE_TRIM_RTOL

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
Sign = Union[int, str]


# ============================================================================
# Fiber fields
# ============================================================================

@dataclass
class FiberField:
    """Fiberwise Fourier modes ``modes[n + N]`` on the full grid."""
    modes: np.ndarray
    real_flag: bool = False

    def __post_init__(self):
        self.modes = np.asarray(self.modes, dtype=complex)
        if self.modes.ndim != 3 or self.modes.shape[0] % 2 == 0:
            raise ValueError(f"modes must have shape (2N+1, n, n), got {self.modes.shape}")

    @classmethod
    def zeros(cls, shape: Tuple[int, int], order: int, real_flag: bool = False) -> "FiberField":
        return cls(np.zeros((2 * order + 1,) + tuple(shape), dtype=complex), real_flag)

    @classmethod
    def from_modes(cls, mapping: Dict[int, np.ndarray], shape: Tuple[int, int],
                   real_flag: bool = False) -> "FiberField":
        order = max((abs(n) for n in mapping), default=0)
        out = cls.zeros(shape, order, real_flag)
        for n, grid in mapping.items():
            out.modes[n + order] = grid
        return out

    @property
    def order(self) -> int:
        return (self.modes.shape[0] - 1) // 2

    @property
    def shape(self) -> Tuple[int, int]:
        return self.modes.shape[1:]

    def mode(self, n: int) -> np.ndarray:
        if abs(n) > self.order:
            return np.zeros(self.shape, dtype=complex)
        return self.modes[n + self.order]

    def set_mode(self, n: int, grid: np.ndarray) -> None:
        if abs(n) > self.order:
            raise IndexError(f"mode {n} outside order {self.order}")
        self.modes[n + self.order] = grid

    def _mode_rms(self) -> np.ndarray:
        return np.sqrt(np.mean(np.abs(self.modes) ** 2, axis=(1, 2)))

    @property
    def degree(self) -> int:
        """Largest |n| whose mode exceeds ``1e-14`` of the field's size."""
        rms = self._mode_rms()
        total = float(np.sqrt(np.sum(rms ** 2)))
        if total == 0.0:
            return 0
        significant = np.nonzero(rms > DEGREE_TRIM_RTOL * total)[0]
        return int(np.max(np.abs(significant - self.order)))

    def padded(self, order: int) -> "FiberField":
        """Same field stored with order ``order`` (truncating if smaller)."""
        out = FiberField.zeros(self.shape, order, self.real_flag)
        m = min(order, self.order)
        out.modes[order - m:order + m + 1] = self.modes[self.order - m:self.order + m + 1]
        return out

    def trimmed(self) -> "FiberField":
        return self.padded(self.degree)

    def copy(self) -> "FiberField":
        return FiberField(self.modes.copy(), self.real_flag)

    def truncated(self, degree: int) -> "FiberField":
        """Zero every mode with ``|n| > degree`` keeping the storage order."""
        out = self.copy()
        for n in range(-self.order, self.order + 1):
            if abs(n) > degree:
                out.modes[n + self.order] = 0.0
        return out

    def _binary(self, other: "FiberField", op) -> "FiberField":
        order = max(self.order, other.order)
        a, b = self.padded(order), other.padded(order)
        return FiberField(op(a.modes, b.modes), self.real_flag and other.real_flag)

    def __add__(self, other: "FiberField") -> "FiberField":
        return self._binary(other, np.add)

    def __sub__(self, other: "FiberField") -> "FiberField":
        return self._binary(other, np.subtract)

    def __neg__(self) -> "FiberField":
        return FiberField(-self.modes, self.real_flag)

    def __mul__(self, scalar) -> "FiberField":
        if np.ndim(scalar) == 2:
            return FiberField(self.modes * scalar[None, :, :], self.real_flag and np.isrealobj(scalar))
        return FiberField(self.modes * scalar, self.real_flag and np.isreal(scalar))

    __rmul__ = __mul__

    def is_conjugate_symmetric(self, tol: float = 1e-12) -> bool:
        scale = max(float(np.max(np.abs(self.modes))), 1.0)
        return bool(np.max(np.abs(self.modes - np.conj(self.modes[::-1]))) <= tol * scale)


def _sign(sign: Sign) -> int:
    if sign in (1, "+", "plus"):
        return 1
    if sign in (-1, "-", "minus"):
        return -1
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


# ============================================================================
# Angular sampling
# ============================================================================

def synthesize(u: FiberField, theta_samples: int) -> np.ndarray:
    """Values ``u(x, theta_j)`` at ``theta_j = 2 pi j / M``, shape ``(M, n, n)``."""
    if theta_samples <= 2 * u.degree:
        raise AliasError(
            f"{theta_samples} angle samples cannot resolve a field of degree {u.degree}"
        )
    theta = TWO_PI * np.arange(theta_samples) / theta_samples
    n = np.arange(-u.order, u.order + 1)
    phases = np.exp(1j * np.outer(theta, n))
    values = np.tensordot(phases, u.modes, axes=([1], [0]))
    return values.real if u.real_flag else values


def decompose(samples: np.ndarray, order: Optional[int] = None, real_flag: bool = False) -> FiberField:
    """Exact trapezoidal Fourier coefficients of equispaced angle samples (axis 0)."""
    samples = np.asarray(samples)
    M = samples.shape[0]
    max_order = (M - 1) // 2
    order = max_order if order is None else min(order, max_order)
    coeffs = np.fft.fft(samples, axis=0) / M
    idx = np.arange(-order, order + 1) % M
    return FiberField(coeffs[idx], real_flag or np.isrealobj(samples))


# ============================================================================
# L2 structure
# ============================================================================

def mode_norms(u: FiberField, speed) -> np.ndarray:
    """``2 pi int |u_n|^2 c^-2 dx`` per mode."""
    grid = speed.grid
    w = grid.node_weights / speed.nodes(speed.c) ** 2
    vals = np.abs(u.modes[:, grid.nodes[0], grid.nodes[1]]) ** 2
    return TWO_PI * vals @ w


def l2_norm(u: FiberField, speed) -> float:
    """Parseval norm ``(2 pi sum_n int |u_n|^2 c^-2 dx)^(1/2)``."""
    return float(np.sqrt(np.sum(mode_norms(u, speed))))


def inner(u: FiberField, w: FiberField, speed) -> complex:
    """L2(SM) product ``<u, w>``, linear in ``u``."""
    grid = speed.grid
    order = max(u.order, w.order)
    a, b = u.padded(order), w.padded(order)
    weights = grid.node_weights / speed.nodes(speed.c) ** 2
    prod = a.modes[:, grid.nodes[0], grid.nodes[1]] * np.conj(b.modes[:, grid.nodes[0], grid.nodes[1]])
    return complex(TWO_PI * np.sum(prod @ weights))


def numerical_degree(u: FiberField, speed, tol: float = 5e-3) -> int:
    """Largest |n| whose mode carries more than ``tol`` of the L2 norm."""
    per_mode = np.sqrt(mode_norms(u, speed))
    total = float(np.sqrt(np.sum(per_mode ** 2)))
    if total == 0.0:
        return 0
    significant = np.nonzero(per_mode > tol * total)[0]
    return int(np.max(np.abs(significant - u.order)))


# ============================================================================
# Optical parameters
# ============================================================================

@dataclass
class OpticalParams:
    """Attenuation ``a``, kernel modes ``k_n`` (``k_modes[n + m_k]``) and margin ``delta``."""
    a: np.ndarray
    k_modes: np.ndarray
    delta: float

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.k_modes = np.asarray(self.k_modes, dtype=complex)
        if self.k_modes.ndim == 2:
            self.k_modes = self.k_modes[None, :, :]

    @classmethod
    def isotropic(cls, a: np.ndarray, k0, delta: float) -> "OpticalParams":
        a = np.asarray(a, dtype=float)
        return cls(a, (np.zeros_like(a) + k0)[None, :, :], delta)

    @property
    def kernel_order(self) -> int:
        return (self.k_modes.shape[0] - 1) // 2

    @property
    def m_k(self) -> int:
        return FiberField(self.k_modes).degree

    def k_mode(self, n: int) -> np.ndarray:
        if abs(n) > self.kernel_order:
            return np.zeros(self.a.shape, dtype=complex)
        return self.k_modes[n + self.kernel_order]

    @property
    def k0(self) -> np.ndarray:
        return self.k_mode(0).real

    @property
    def sigma_a(self) -> np.ndarray:
        return self.a - self.k0

    @property
    def kernel_is_real(self) -> bool:
        return FiberField(self.k_modes).is_conjugate_symmetric()

    def synthesize_kernel(self, n_angles: Optional[int] = None) -> np.ndarray:
        """``k(x, alpha_j)`` on ``4 m_k + 1`` angles unless given."""
        n_angles = n_angles or 4 * self.kernel_order + 1
        return synthesize(FiberField(self.k_modes), n_angles)

    def check(self, mask: np.ndarray) -> None:
        """Raise AdmissibilityError unless a >= 0, k >= 0 and sigma_a >= delta on ``mask``."""
        if self.delta <= 0:
            raise AdmissibilityError("delta must be positive")
        if np.any(self.a[mask] < 0):
            raise AdmissibilityError("attenuation must be nonnegative")
        kernel = self.synthesize_kernel()
        low = float(np.min(kernel.real[:, mask])) if kernel.size else 0.0
        if low < ADMISSIBILITY_TOL:
            raise AdmissibilityError(f"scattering kernel takes negative values (min {low:.3e})")
        margin = float(np.min(self.sigma_a[mask]))
        if margin < self.delta * (1.0 - 1e-12):
            raise AdmissibilityError(
                f"subcriticality fails: min(a - k_0) = {margin:.4g} < delta = {self.delta:.4g}"
            )


def apply_S(params: OpticalParams, u: FiberField) -> FiberField:
    """``(Su)_n = k_n u_n`` for ``|n| <= m_k``."""
    out = FiberField.zeros(u.shape, u.order, u.real_flag and params.kernel_is_real)
    for n in range(-min(u.order, params.kernel_order), min(u.order, params.kernel_order) + 1):
        out.set_mode(n, params.k_mode(n) * u.mode(n))
    return out


def q_infty(params: OpticalParams, mask: Optional[np.ndarray] = None) -> float:
    """``sup a + sup_x int |k(x, alpha)| d alpha``."""
    mask = np.ones(params.a.shape, dtype=bool) if mask is None else mask
    n_angles = max(64, 8 * params.kernel_order + 1)
    kernel = np.abs(params.synthesize_kernel(n_angles))
    kernel_integral = kernel.mean(axis=0) * TWO_PI
    return float(np.max(params.a[mask]) + np.max(kernel_integral[mask]))


def accretivity_gap(params: OpticalParams, u: FiberField, speed) -> float:
    """``Re((a - S) u, u) - delta |u|^2``."""
    grid = speed.grid
    weights = grid.node_weights / speed.nodes(speed.c) ** 2
    a = speed.nodes(params.a)
    total = 0.0
    for n in range(-u.order, u.order + 1):
        coef = a - speed.nodes(params.k_mode(n)).real - params.delta
        total += float(np.sum(coef * np.abs(speed.nodes(u.mode(n))) ** 2 * weights))
    return TWO_PI * total


# ============================================================================
# Frame operators
# ============================================================================

def apply_eta(sign: Sign, k: int, tilde_u: np.ndarray, speed, zero_boundary: bool = False) -> np.ndarray:
    """Mode ``k +/- 1`` coefficient of ``eta_+/- (u_k e^{ik theta})``.

    Args:
        sign: ``'+'`` or ``'-'``
        k: Mode index of ``tilde_u``
        tilde_u: Complex grid
        speed: SpeedField
        zero_boundary: Use the stencils for grids vanishing on the circle

    Returns:
        Complex full grid, zero off the mask
    """
    s = _sign(sign)
    grid = speed.grid
    d, dbar = grid.wirtinger(zero_boundary)
    v = grid.restrict(np.asarray(tilde_u, dtype=complex))
    c = speed.nodes(speed.c)
    if s > 0:
        out = c * (d @ v) + k * speed.nodes(speed.dz_c) * v
    else:
        out = c * (dbar @ v) - k * speed.nodes(speed.dzbar_c) * v
    return grid.prolong(out)


def _frame(u: FiberField, speed, plus_coef, minus_coef, zero_boundary: bool,
           plus_modes=None, minus_modes=None) -> FiberField:
    out = FiberField.zeros(u.shape, u.order + 1, u.real_flag)
    for n in range(-u.order, u.order + 1):
        grid = u.mode(n)
        if not np.any(grid):
            continue
        if plus_modes is None or plus_modes(n):
            out.modes[n + 1 + out.order] += plus_coef * apply_eta("+", n, grid, speed, zero_boundary)
        if minus_modes is None or minus_modes(n):
            out.modes[n - 1 + out.order] += minus_coef * apply_eta("-", n, grid, speed, zero_boundary)
    return out


def apply_X(u: FiberField, speed, zero_boundary: bool = False) -> FiberField:
    """Geodesic vector field ``X = eta_+ + eta_-``."""
    return _frame(u, speed, 1.0, 1.0, zero_boundary)


def apply_X_perp(u: FiberField, speed, zero_boundary: bool = False) -> FiberField:
    """``X_perp = -i (eta_+ - eta_-)``."""
    return _frame(u, speed, -1j, 1j, zero_boundary)


def apply_V(u: FiberField) -> FiberField:
    """Vertical derivative ``d/dtheta``."""
    n = np.arange(-u.order, u.order + 1)
    return FiberField(u.modes * (1j * n)[:, None, None], u.real_flag)


def apply_X_plus(u: FiberField, speed, zero_boundary: bool = False) -> FiberField:
    """``eta_+`` on modes ``n >= 0`` and ``eta_-`` on modes ``n <= 0`` (raises |n|)."""
    return _frame(u, speed, 1.0, 1.0, zero_boundary,
                  plus_modes=lambda n: n >= 0, minus_modes=lambda n: n <= 0)


def apply_X_minus(u: FiberField, speed, zero_boundary: bool = False) -> FiberField:
    """``eta_-`` on modes ``n > 0`` and ``eta_+`` on modes ``n < 0`` (lowers |n|)."""
    return _frame(u, speed, 1.0, 1.0, zero_boundary,
                  plus_modes=lambda n: n < 0, minus_modes=lambda n: n > 0)


# ============================================================================
# Random smooth fields
# ============================================================================

def random_field(speed, degree: int, rng: np.random.Generator, *, zero_boundary: bool = False,
                 real: bool = True, poly_degree: int = 2, scale: float = 1.0) -> FiberField:
    """Band-limited field whose modes are random low-order polynomials.

    With ``zero_boundary`` each mode is multiplied by ``R^2 - r^2``.
    """
    grid = speed.grid
    X, Y = grid.x / grid.radius, grid.y / grid.radius
    envelope = (grid.radius ** 2 - grid.r ** 2) if zero_boundary else np.ones(grid.shape)
    out = FiberField.zeros(grid.shape, degree, real_flag=real)

    def poly():
        grid_vals = np.zeros(grid.shape, dtype=complex)
        for i in range(poly_degree + 1):
            for j in range(poly_degree + 1 - i):
                coef = rng.standard_normal() + 1j * rng.standard_normal()
                grid_vals += coef * X ** i * Y ** j
        return grid_vals

    for n in range(0, degree + 1):
        mode = scale * envelope * poly()
        if n == 0 and real:
            mode = mode.real.astype(complex)
        mode = np.where(grid.mask, mode, 0.0)
        out.set_mode(n, mode)
        if n > 0:
            out.set_mode(-n, np.conj(mode) if real else scale * np.where(grid.mask, envelope * poly(), 0.0))
    return out
