# core/discretization.py
"""
Masked Cartesian grid on the disk.

This module provides:
- DiskGrid: node layout, interior mask and quadrature weights
- Sparse first-derivative stencils (generic and zero-boundary flavours)
- Shortley-Weller second-order operators with arms cut at the circle
- Taylor extension of mask values to the full grid and bilinear lookup

Conventions: arrays are indexed ``[ix, iy]`` with ``x = axis[ix]``. Vectors
over mask nodes follow ``np.nonzero(mask)`` ordering.
"""
import logging
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.ndimage import distance_transform_edt
from scipy.sparse.linalg import splu

logger = logging.getLogger(__name__)

# Nodes closer than this fraction of h to the circle are treated as boundary
BOUNDARY_SNAP = 1e-9
# Supersampling per axis for the coverage of cut cells
COVERAGE_SUBSAMPLES = 16
_PAD = 2


class DiskGrid:
    """Node layout of a ``grid_n x grid_n`` grid over ``[-R, R]^2``."""

    def __init__(self, radius: float, grid_n: int):
        self.radius = float(radius)
        self.n = int(grid_n)
        self.axis = np.linspace(-self.radius, self.radius, self.n)
        self.h = float(self.axis[1] - self.axis[0])
        self.x, self.y = np.meshgrid(self.axis, self.axis, indexing="ij")
        self.r = np.hypot(self.x, self.y)
        self.phi = np.arctan2(self.y, self.x)
        self.mask = self.r < self.radius - BOUNDARY_SNAP * self.h

        self.nodes = np.nonzero(self.mask)
        self.n_nodes = int(self.nodes[0].size)
        self.index = np.full(self.mask.shape, -1, dtype=np.int64)
        self.index[self.nodes] = np.arange(self.n_nodes)
        self.node_x = self.x[self.nodes]
        self.node_y = self.y[self.nodes]

        self._padded_index = np.full((self.n + 2 * _PAD, self.n + 2 * _PAD), -1, dtype=np.int64)
        self._padded_index[_PAD:-_PAD, _PAD:-_PAD] = self.index
        logger.debug("DiskGrid R=%.3g n=%d h=%.4g nodes=%d", self.radius, self.n, self.h, self.n_nodes)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    # ------------------------------------------------------------------
    # Mask <-> full grid
    # ------------------------------------------------------------------

    def restrict(self, values: np.ndarray) -> np.ndarray:
        """Mask-node vector of a full grid."""
        return np.asarray(values)[self.nodes]

    def prolong(self, vector: np.ndarray) -> np.ndarray:
        """Full grid carrying ``vector`` on the mask and zero elsewhere."""
        vector = np.asarray(vector)
        out = np.zeros(self.shape, dtype=vector.dtype)
        out[self.nodes] = vector
        return out

    # ------------------------------------------------------------------
    # Quadrature
    # ------------------------------------------------------------------

    @cached_property
    def nearest_node(self) -> np.ndarray:
        """Node index of the nearest mask node for every grid point."""
        _, (ii, jj) = distance_transform_edt(~self.mask, return_indices=True)
        return self.index[ii, jj]

    @cached_property
    def full_weights(self) -> np.ndarray:
        """Area of each grid cell covered by the disk, summing to pi R^2."""
        h, R = self.h, self.radius
        cut = np.abs(self.r - R) < 0.75 * h
        weights = np.where(self.r < R, h * h, 0.0)

        offsets = (np.arange(COVERAGE_SUBSAMPLES) + 0.5) / COVERAGE_SUBSAMPLES - 0.5
        ox, oy = np.meshgrid(offsets * h, offsets * h, indexing="ij")
        cx = self.x[cut][:, None] + ox.ravel()[None, :]
        cy = self.y[cut][:, None] + oy.ravel()[None, :]
        weights[cut] = h * h * np.mean(cx ** 2 + cy ** 2 < R * R, axis=1)

        total = weights.sum()
        if total > 0:
            weights *= np.pi * R * R / total
        return weights

    @cached_property
    def node_weights(self) -> np.ndarray:
        """Quadrature weights on mask nodes (nearest-node extension of the integrand)."""
        return np.bincount(
            self.nearest_node.ravel(), weights=self.full_weights.ravel(), minlength=self.n_nodes
        )

    def integrate(self, node_values: np.ndarray):
        """Integral over the disk of a mask-node vector (or stack along axis 0)."""
        return np.tensordot(np.asarray(node_values), self.node_weights, axes=([-1], [0]))

    # ------------------------------------------------------------------
    # Neighbour arms
    # ------------------------------------------------------------------

    def _neighbor(self, axis: int, step: int) -> np.ndarray:
        ii = self.nodes[0] + _PAD + (step if axis == 0 else 0)
        jj = self.nodes[1] + _PAD + (step if axis == 1 else 0)
        return self._padded_index[ii, jj]

    def _arm(self, axis: int, sign: int) -> Tuple[np.ndarray, np.ndarray]:
        """Neighbour index (or -1) and arm length towards ``sign`` along ``axis``."""
        neighbor = self._neighbor(axis, sign)
        along = self.node_x if axis == 0 else self.node_y
        across = self.node_y if axis == 0 else self.node_x
        reach = np.sqrt(np.maximum(self.radius ** 2 - across ** 2, 0.0))
        crossing = reach - sign * along
        arm = np.where(neighbor >= 0, self.h, np.clip(crossing, 1e-12 * self.h, self.h))
        return neighbor, arm

    @cached_property
    def arms(self):
        """``{(axis, sign): (neighbor, arm)}`` for the four directions."""
        return {(ax, s): self._arm(ax, s) for ax in (0, 1) for s in (1, -1)}

    def crossing_points(self, axis: int, sign: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nodes whose arm is cut by the circle, and the crossing coordinates."""
        neighbor, arm = self.arms[(axis, sign)]
        cut = neighbor < 0
        px = self.node_x[cut] + (sign * arm[cut] if axis == 0 else 0.0)
        py = self.node_y[cut] + (sign * arm[cut] if axis == 1 else 0.0)
        return np.nonzero(cut)[0], px, py

    # ------------------------------------------------------------------
    # First derivatives
    # ------------------------------------------------------------------

    def _generic_derivative(self, axis: int) -> sparse.csr_matrix:
        h = self.h
        rows, cols, vals = [], [], []
        own = np.arange(self.n_nodes)
        p1, p2 = self._neighbor(axis, 1), self._neighbor(axis, 2)
        m1, m2 = self._neighbor(axis, -1), self._neighbor(axis, -2)
        hp1, hp2, hm1, hm2 = p1 >= 0, p2 >= 0, m1 >= 0, m2 >= 0

        def add(sel, entries):
            for target, coef in entries:
                rows.append(own[sel])
                cols.append(target[sel])
                vals.append(np.full(int(sel.sum()), coef))

        central = hp1 & hm1
        add(central, [(p1, 0.5 / h), (m1, -0.5 / h)])
        backward = ~hp1 & hm1 & hm2
        add(backward, [(own, 1.5 / h), (m1, -2.0 / h), (m2, 0.5 / h)])
        forward = ~hm1 & hp1 & hp2
        add(forward, [(own, -1.5 / h), (p1, 2.0 / h), (p2, -0.5 / h)])
        back1 = ~hp1 & hm1 & ~hm2
        add(back1, [(own, 1.0 / h), (m1, -1.0 / h)])
        fwd1 = ~hm1 & hp1 & ~hp2
        add(fwd1, [(own, -1.0 / h), (p1, 1.0 / h)])

        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_nodes, self.n_nodes),
        )

    def _zero_boundary_derivative(self, axis: int) -> sparse.csr_matrix:
        own = np.arange(self.n_nodes)
        plus, hp = self.arms[(axis, 1)]
        minus, hm = self.arms[(axis, -1)]
        c_minus = -hp / (hm * (hm + hp))
        c_own = (hp - hm) / (hm * hp)
        c_plus = hm / (hp * (hm + hp))

        rows = [own]
        cols = [own]
        vals = [c_own]
        for neighbor, coef in ((minus, c_minus), (plus, c_plus)):
            sel = neighbor >= 0
            rows.append(own[sel])
            cols.append(neighbor[sel])
            vals.append(coef[sel])
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_nodes, self.n_nodes),
        )

    @cached_property
    def dx(self) -> sparse.csr_matrix:
        return self._generic_derivative(0)

    @cached_property
    def dy(self) -> sparse.csr_matrix:
        return self._generic_derivative(1)

    @cached_property
    def dx0(self) -> sparse.csr_matrix:
        """x-derivative for fields vanishing on the circle."""
        return self._zero_boundary_derivative(0)

    @cached_property
    def dy0(self) -> sparse.csr_matrix:
        return self._zero_boundary_derivative(1)

    def wirtinger(self, zero_boundary: bool = False) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
        """Sparse ``(d, dbar)`` with ``d = (Dx - iDy)/2`` and ``dbar = (Dx + iDy)/2``."""
        dx, dy = (self.dx0, self.dy0) if zero_boundary else (self.dx, self.dy)
        return (0.5 * (dx - 1j * dy)).tocsr(), (0.5 * (dx + 1j * dy)).tocsr()

    # ------------------------------------------------------------------
    # Second-order operators
    # ------------------------------------------------------------------

    def divergence_form(self, sigma: Optional[Callable] = None) -> sparse.csr_matrix:
        """Shortley-Weller discretization of ``div(sigma grad p)`` with ``p = 0`` on the circle.

        Args:
            sigma: Callable ``sigma(x, y)``, sampled at arm midpoints; ``None`` means 1

        Returns:
            Sparse (n_nodes x n_nodes) matrix
        """
        own = np.arange(self.n_nodes)
        rows, cols, vals = [], [], []
        diag = np.zeros(self.n_nodes)
        for axis in (0, 1):
            plus, hp = self.arms[(axis, 1)]
            minus, hm = self.arms[(axis, -1)]
            for neighbor, arm, sign in ((plus, hp, 1), (minus, hm, -1)):
                if sigma is None:
                    weight = np.ones(self.n_nodes)
                else:
                    mx = self.node_x + (0.5 * sign * arm if axis == 0 else 0.0)
                    my = self.node_y + (0.5 * sign * arm if axis == 1 else 0.0)
                    weight = np.asarray(sigma(mx, my), dtype=float)
                coef = 2.0 * weight / (arm * (hp + hm))
                diag -= coef
                sel = neighbor >= 0
                rows.append(own[sel])
                cols.append(neighbor[sel])
                vals.append(coef[sel])
        rows.append(own)
        cols.append(own)
        vals.append(diag)
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n_nodes, self.n_nodes),
        )

    def dirichlet_lift(self, boundary_value: Callable) -> np.ndarray:
        """Contribution of boundary values ``g(x, y)`` to the Laplacian stencil."""
        lift = np.zeros(self.n_nodes, dtype=complex)
        for axis in (0, 1):
            _, hp = self.arms[(axis, 1)]
            _, hm = self.arms[(axis, -1)]
            for sign, arm in ((1, hp), (-1, hm)):
                idx, px, py = self.crossing_points(axis, sign)
                coef = 2.0 / (arm[idx] * (hp[idx] + hm[idx]))
                np.add.at(lift, idx, coef * np.asarray(boundary_value(px, py)))
        return lift

    @cached_property
    def laplacian(self) -> sparse.csr_matrix:
        """Flat five-point Laplacian with homogeneous Dirichlet arms."""
        return self.divergence_form(None)

    @cached_property
    def laplacian_lu(self):
        """Sparse LU of the Laplacian, factorized once per grid."""
        logger.debug("Factorizing Laplacian on %d nodes", self.n_nodes)
        return splu(self.laplacian.tocsc())

    # ------------------------------------------------------------------
    # Extension and interpolation
    # ------------------------------------------------------------------

    @cached_property
    def extension(self) -> sparse.csr_matrix:
        """Linear Taylor extension from mask nodes to every grid point.

        ``E @ v`` reproduces ``v`` on the mask and extrapolates outside with
        the generic derivative stencils of the nearest node.
        """
        nearest = self.nearest_node.ravel()
        n_full = nearest.size
        select = sparse.csr_matrix(
            (np.ones(n_full), (np.arange(n_full), nearest)), shape=(n_full, self.n_nodes)
        )
        off_x = self.x.ravel() - self.node_x[nearest]
        off_y = self.y.ravel() - self.node_y[nearest]
        far = np.hypot(off_x, off_y) > 3.0 * self.h
        off_x[far] = 0.0
        off_y[far] = 0.0
        return (
            select
            + sparse.diags(off_x) @ select @ self.dx
            + sparse.diags(off_y) @ select @ self.dy
        ).tocsr()

    def extend(self, node_values: np.ndarray) -> np.ndarray:
        """Flattened full-grid values of one mask vector (or columns of a matrix)."""
        return self.extension @ node_values

    def locate(self, px: np.ndarray, py: np.ndarray):
        """Bilinear cell lookup: flat base index and fractional offsets."""
        u = (np.asarray(px) + self.radius) / self.h
        v = (np.asarray(py) + self.radius) / self.h
        i0 = np.clip(np.floor(u), 0, self.n - 2).astype(np.int64)
        j0 = np.clip(np.floor(v), 0, self.n - 2).astype(np.int64)
        return i0 * self.n + j0, u - i0, v - j0

    def interpolate(self, flat_values: np.ndarray, base, fx, fy) -> np.ndarray:
        """Bilinear interpolation of flattened full-grid values at located points."""
        n = self.n
        return (
            (1.0 - fx) * (1.0 - fy) * flat_values[base]
            + fx * (1.0 - fy) * flat_values[base + n]
            + (1.0 - fx) * fy * flat_values[base + 1]
            + fx * fy * flat_values[base + n + 1]
        )

    def sample(self, node_values: np.ndarray, px, py) -> np.ndarray:
        """Evaluate a mask vector at arbitrary points of the closed disk."""
        base, fx, fy = self.locate(px, py)
        return self.interpolate(self.extend(node_values), base, fx, fy)
