"""m x m nonoverlapping partition, overlapping subdomains, oversampling
domains and a bilinear partition of unity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import CellRegion, FineMesh


@dataclass(frozen=True, eq=False)
class Decomposition:
    mesh: FineMesh
    m: int
    ell: int
    overlap: int
    omega0: list[CellRegion]
    omega: list[CellRegion]
    omega_star: list[CellRegion]
    pou: np.ndarray  # (M, n_nodes)

    @property
    def M(self) -> int:
        return self.m * self.m

    def coarse_cell_of(self) -> np.ndarray:
        """Index of the partition domain containing each fine cell."""
        out = np.empty(self.mesh.n_cells, dtype=np.int64)
        for i, reg in enumerate(self.omega0):
            out[reg.cells] = i
        return out

    def overlap_counts(self) -> tuple[int, int]:
        """Pointwise overlap numbers (kappa, kappa*) over fine cells."""
        k = np.zeros(self.mesh.n_cells, dtype=np.int64)
        ks = np.zeros(self.mesh.n_cells, dtype=np.int64)
        for reg, regs in zip(self.omega, self.omega_star):
            k[reg.cells] += 1
            ks[regs.cells] += 1
        return int(k.max()), int(ks.max())


def _ramp_1d(n: int, lo: int, hi: int, width: float) -> np.ndarray:
    """Nodal weights on 0..n: zero outside [lo, hi], rising linearly from
    interior ends of the interval over ``width`` nodes; flat on domain ends."""
    k = np.arange(n + 1, dtype=float)
    d_lo = k - lo if lo > 0 else np.full(n + 1, np.inf)
    d_hi = hi - k if hi < n else np.full(n + 1, np.inf)
    w = np.clip(np.minimum(d_lo, d_hi) / width, 0.0, 1.0)
    w[(k < lo) | (k > hi)] = 0.0
    return w


def build_decomposition(mesh: FineMesh, m: int, ell: int, overlap: int = 2) -> Decomposition:
    if m < 1:
        raise ValueError("m must be positive")
    if mesh.n_x % m or mesh.n_y % m:
        raise ValueError(f"m={m} must divide the mesh size ({mesh.n_x} x {mesh.n_y})")
    if ell < 1:
        raise ValueError("oversampling needs at least one layer (ell >= 1)")
    if overlap < 1:
        raise ValueError("overlap must be at least one layer")
    sx, sy = mesh.n_x // m, mesh.n_y // m
    omega0, omega, omega_star, pou = [], [], [], []
    for J in range(m):
        for I in range(m):
            i0, i1, j0, j1 = I * sx, (I + 1) * sx, J * sy, (J + 1) * sy
            omega0.append(mesh.box(i0, i1, j0, j1))
            o = mesh.box(i0 - overlap, i1 + overlap, j0 - overlap, j1 + overlap)
            omega.append(o)
            e = overlap + ell
            omega_star.append(mesh.box(i0 - e, i1 + e, j0 - e, j1 + e))
            a0, a1, b0, b1 = o.bounds
            wx = _ramp_1d(mesh.n_x, a0, a1, 2 * overlap)
            wy = _ramp_1d(mesh.n_y, b0, b1, 2 * overlap)
            pou.append(np.outer(wy, wx).ravel())
    pou = np.array(pou)
    total = pou.sum(axis=0)
    if np.any(total <= 0):
        raise ValueError("partition of unity has uncovered nodes")
    pou /= total
    pou.setflags(write=False)
    return Decomposition(mesh, m, ell, overlap, omega0, omega, omega_star, pou)


def pou_gradients(mesh: FineMesh, chi: np.ndarray) -> np.ndarray:
    """Max of |grad chi| over each cell (attained at a corner for bilinear chi)."""
    c = chi[mesh.cell_nodes]  # bl, br, tl, tr
    gx_bottom = (c[:, 1] - c[:, 0]) / mesh.h_x
    gx_top = (c[:, 3] - c[:, 2]) / mesh.h_x
    gy_left = (c[:, 2] - c[:, 0]) / mesh.h_y
    gy_right = (c[:, 3] - c[:, 1]) / mesh.h_y
    corners = np.stack([
        np.hypot(gx_bottom, gy_left),
        np.hypot(gx_bottom, gy_right),
        np.hypot(gx_top, gy_left),
        np.hypot(gx_top, gy_right),
    ])
    return corners.max(axis=0)


def pou_gradient_bound(decomp: Decomposition) -> float:
    """max_i ||grad chi_i||_inf."""
    return float(max(pou_gradients(decomp.mesh, chi).max() for chi in decomp.pou))
