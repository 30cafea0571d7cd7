"""Lowest-order Raviart-Thomas / piecewise-constant spaces on the fine mesh.

A velocity is stored as one number per edge: the total flux through the edge
in the direction of the global edge normal. A pressure is one value per cell.
Stream functions are bilinear nodal functions; their curl lands exactly in
RT0 on rectangles, which gives the discrete exact sequence Q1 -> RT0 -> P0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import BOTTOM, CELL_EDGE_SIGN, LEFT, RIGHT, TOP, CellRegion, FineMesh

# reference 1D mass of two linear hats on [0, 1]
_HAT_MASS = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Cell-wise constant permeability."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("coefficient values must be a flat per-cell array")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            bad = int(np.flatnonzero(~(v > 0))[0]) if np.any(~(v > 0)) else -1
            raise ValueError(f"permeability must be positive and finite (cell {bad})")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def uniform(cls, mesh: FineMesh, value: float = 1.0) -> "CoefficientField":
        return cls(np.full(mesh.n_cells, float(value)))

    @property
    def alpha0(self) -> float:
        return float(self.values.min())

    @property
    def alpha1(self) -> float:
        return float(self.values.max())

    @property
    def contrast(self) -> float:
        return self.alpha1 / self.alpha0

    def scaled(self, s: float) -> "CoefficientField":
        return CoefficientField(self.values * s)


def _region_cells(mesh: FineMesh, region: CellRegion | None) -> np.ndarray:
    return np.arange(mesh.n_cells) if region is None else region.cells


def assemble_mass(mesh: FineMesh, A: CoefficientField, region: CellRegion | None = None) -> sp.csr_matrix:
    """Weighted velocity mass matrix a(u, v) = int A^{-1} u.v over ``region``.

    Returned in global edge numbering; rows/columns of edges outside the
    region are empty.
    """
    cells = _region_cells(mesh, region)
    inv_a = 1.0 / A.values[cells]
    if np.any(~np.isfinite(inv_a)):
        raise ValueError("nonpositive coefficient")
    ce = mesh.cell_edges[cells]
    kx = (mesh.h_x / mesh.h_y) * inv_a
    ky = (mesh.h_y / mesh.h_x) * inv_a
    rows, cols, vals = [], [], []
    for pair, k in (((LEFT, RIGHT), kx), ((BOTTOM, TOP), ky)):
        for a in range(2):
            for b in range(2):
                rows.append(ce[:, pair[a]])
                cols.append(ce[:, pair[b]])
                vals.append(k * _HAT_MASS[a, b])
    n = mesh.n_edges
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def assemble_div(mesh: FineMesh, region: CellRegion | None = None) -> sp.csr_matrix:
    """b(u, q) = sum_K q_K * (net outward flux of u through dK), as a cells x edges matrix."""
    cells = _region_cells(mesh, region)
    ce = mesh.cell_edges[cells]
    rows = np.repeat(cells, 4)
    vals = np.tile(CELL_EDGE_SIGN, cells.size)
    return sp.csr_matrix((vals, (rows, ce.ravel())), shape=(mesh.n_cells, mesh.n_edges))


def assemble_augmented(mass, div, gamma: float, cell_area: float) -> sp.csr_matrix:
    """a^gamma = a + gamma * (div u, div v); div values are flux sums over cell area."""
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    if mass.shape[0] != div.shape[1]:
        raise ValueError("mass and divergence operators have incompatible shapes")
    if gamma == 0:
        return sp.csr_matrix(mass, copy=True)
    return sp.csr_matrix(mass + (gamma / cell_area) * (div.T @ div))


def cell_divergence(mesh: FineMesh, u: np.ndarray) -> np.ndarray:
    """Cell-wise (constant) divergence of an RT0 field."""
    ce = mesh.cell_edges
    flux = u[ce] @ CELL_EDGE_SIGN
    return flux / mesh.cell_area


def curl_matrix(mesh: FineMesh) -> sp.csr_matrix:
    """Edges x nodes matrix mapping a bilinear stream function to the fluxes of its curl.

    curl phi = (d phi/dy, -d phi/dx); the flux through a vertical edge is
    phi(top) - phi(bottom), through a horizontal edge phi(left) - phi(right).
    """
    en = mesh.edge_nodes
    nv = mesh.n_vertical
    sgn = np.where(np.arange(mesh.n_edges) < nv, 1.0, -1.0)
    rows = np.repeat(np.arange(mesh.n_edges), 2)
    vals = np.column_stack((-sgn, sgn)).ravel()
    return sp.csr_matrix((vals, (rows, en.ravel())), shape=(mesh.n_edges, mesh.n_nodes))


def curl_of_stream(mesh: FineMesh, phi: np.ndarray, region: CellRegion | None = None) -> np.ndarray:
    en = mesh.edge_nodes
    u = phi[en[:, 1]] - phi[en[:, 0]]
    u[mesh.n_vertical:] *= -1.0
    if region is not None:
        out = np.zeros_like(u)
        out[region.edges] = u[region.edges]
        return out
    return u


def rt_interpolate_scaled(mesh: FineMesh, chi: np.ndarray, u: np.ndarray,
                          region: CellRegion | None = None) -> np.ndarray:
    """RT interpolant of chi * u for nodal bilinear chi and an RT0 field u.

    The normal component of u is constant on each edge and chi is linear
    along it, so the edge moment is flux * mean(chi at the two end nodes).
    """
    en = mesh.edge_nodes
    out = u * 0.5 * (chi[en[:, 0]] + chi[en[:, 1]])
    if region is not None:
        keep = np.zeros(mesh.n_edges, dtype=bool)
        keep[region.edges] = True
        out[~keep] = 0.0
    return out


def scale_edges_by_chi(mesh: FineMesh, chi: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Per-edge factors mean(chi) used by rt_interpolate_scaled, for an edge subset."""
    en = mesh.edge_nodes[edges]
    return 0.5 * (chi[en[:, 0]] + chi[en[:, 1]])


def cell_values(mesh: FineMesh, f) -> np.ndarray:
    """Cell values of a source: callables are sampled at cell centroids."""
    if callable(f):
        xc = mesh.cell_centers
        return np.asarray(f(xc[:, 0], xc[:, 1]), dtype=float) * np.ones(mesh.n_cells)
    f = np.asarray(f, dtype=float)
    if f.shape != (mesh.n_cells,):
        raise ValueError(f"source must have one value per cell ({mesh.n_cells}), got {f.shape}")
    return f


def assemble_load(mesh: FineMesh, f, region: CellRegion | None = None) -> np.ndarray:
    """(f, 1_K) for every cell K (midpoint rule)."""
    out = cell_values(mesh, f) * mesh.cell_area
    if region is not None:
        masked = np.zeros_like(out)
        masked[region.cells] = out[region.cells]
        return masked
    return out


def assemble_div_load(div, f_cells: np.ndarray) -> np.ndarray:
    """Edge vector of b(v, f) = sum_K f_K (div-matrix v)_K; multiply by -gamma for the augmented rhs."""
    return div.T @ f_cells


def rt0_evaluate(mesh: FineMesh, u: np.ndarray, xi: np.ndarray, eta: np.ndarray):
    """Point values of an RT0 field at reference points (xi, eta) in [0,1]^2 of every cell.

    Returns arrays (n_cells, len(xi)) for both components.
    """
    ce = mesh.cell_edges
    hx, hy = mesh.h_x, mesh.h_y
    fl, fr, fb, ft = (u[ce[:, s]][:, None] for s in (LEFT, RIGHT, BOTTOM, TOP))
    ux = ((1 - xi) * fl + xi * fr) / hy
    uy = ((1 - eta) * fb + eta * ft) / hx
    return ux, uy


def l2_error_to_exact(mesh: FineMesh, A: CoefficientField, u: np.ndarray, p: np.ndarray, exact,
                      order: int = 4) -> tuple[float, float]:
    """Relative errors ||u - u_ex||_{L2(a)} and ||p - p_ex|| by tensor Gauss quadrature.

    ``exact(x, y)`` returns (p, u_x, u_y); both pressures are compared with zero mean.
    """
    g, w = np.polynomial.legendre.leggauss(order)
    g, w = 0.5 * (g + 1), 0.5 * w
    xi, eta = (a.ravel() for a in np.meshgrid(g, g))
    wq = np.outer(w, w).ravel() * mesh.cell_area
    i, j = mesh.cell_ij
    x = (i[:, None] + xi) * mesh.h_x
    y = (j[:, None] + eta) * mesh.h_y
    pe, uxe, uye = exact(x, y)
    ux, uy = rt0_evaluate(mesh, u, xi, eta)
    inv_a = (1.0 / A.values)[:, None]
    ev = np.sqrt(np.sum(inv_a * ((ux - uxe) ** 2 + (uy - uye) ** 2) * wq)
                 / np.sum(inv_a * (uxe ** 2 + uye ** 2) * wq))
    pe = pe - np.sum(pe * wq) / np.sum(wq)
    ph = (p - p.mean())[:, None]
    ep = np.sqrt(np.sum((ph - pe) ** 2 * wq) / np.sum(pe ** 2 * wq))
    return float(ev), float(ep)
