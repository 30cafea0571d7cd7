"""Global multiscale spaces, the coarse saddle-point solve and error measures.

Coarse trial functions are kept as sparse fine-DOF columns; every coarse
matrix is a triple product with a fine operator.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .decomposition import Decomposition
from .fem import (CoefficientField, assemble_augmented, assemble_div, assemble_mass, cell_values,
                  scale_edges_by_chi)
from .local_basis import LocalBasis
from .mesh import FineMesh
from .saddle import IncompatibleDataError, SaddleProblem, SingularSystemError, solve_saddle


class FineOperators:
    """Global mass, divergence and augmented operators for one coefficient."""

    def __init__(self, mesh: FineMesh, A: CoefficientField):
        self.mesh, self.A = mesh, A
        self.M = assemble_mass(mesh, A)
        self.B = assemble_div(mesh)
        self._aug = {}

    def augmented(self, gamma: float) -> sp.csr_matrix:
        if gamma not in self._aug:
            self._aug[gamma] = assemble_augmented(self.M, self.B, gamma, self.mesh.cell_area)
        return self._aug[gamma]

    @cached_property
    def hdiv(self) -> sp.csr_matrix:
        """Gram matrix of the H(div; a) inner product."""
        return self.augmented(1.0)


@dataclass
class FineSolution:
    u: np.ndarray
    p: np.ndarray
    residual: float


def fine_solve(mesh: FineMesh, A: CoefficientField, f, gamma: float = 0.0,
               ops: FineOperators | None = None, tol: float = 1e-8) -> FineSolution:
    """Reference RT0/P0 solution with zero flux on the boundary and mean-zero pressure.

    The augmented and plain formulations share the same discrete solution
    (div u = -P_h f holds exactly); ``gamma`` only changes the matrix.
    The pressure is pinned in one cell and shifted afterwards: a dense
    mean-value row slows the sparse LU down considerably at this size.
    """
    ops = ops or FineOperators(mesh, A)
    fc = cell_values(mesh, f)
    area = mesh.cell_area
    problem = SaddleProblem(ops.augmented(gamma), ops.B, -gamma * (ops.B.T @ fc), -fc * area,
                            fixed=mesh.boundary_edges, fixed_values=0.0,
                            gauge="pin_then_shift", weights=np.full(mesh.n_cells, area))
    u, p, rep = solve_saddle(problem, tol=tol)
    return FineSolution(u, p, rep.residual)


def assemble_global_particular(locals_: list[LocalBasis], decomp: Decomposition):
    """u = sum_i Pi_h(chi_i u_par_i), p = sum_i p_par_i, shifted to zero mean."""
    mesh = decomp.mesh
    u = np.zeros(mesh.n_edges)
    p = np.zeros(mesh.n_cells)
    for lb in locals_:
        part = lb.particular
        i = lb.index
        u[part.edges] += scale_edges_by_chi(mesh, decomp.pou[i], part.edges) * part.u_par
        p[part.cells] += part.p_par
    p -= p.mean()
    return u, p


def coarse_rt_columns(mesh: FineMesh, m: int) -> sp.csc_matrix:
    """Coarse RT0 basis (unit flux through each interior coarse edge) in fine edge DOFs.

    Vertical coarse edges first (row-major over coarse rows), then horizontal.
    """
    if mesh.n_x % m or mesh.n_y % m:
        raise ValueError("coarse grid must align with the fine mesh")
    sx, sy = mesh.n_x // m, mesh.n_y // m
    Hx, Hy = 1.0 / m, 1.0 / m
    rows, cols, vals = [], [], []
    col = 0
    # vertical coarse edge at X_I (I = 1..m-1), coarse row J: fine vertical edges with
    # i in [(I-1)sx, (I+1)sx], j in [J sy, (J+1) sy)
    for J in range(m):
        for I in range(1, m):
            ii = np.arange((I - 1) * sx, (I + 1) * sx + 1)
            x = ii * mesh.h_x
            w = np.where(ii <= I * sx, (x - (I - 1) * Hx), ((I + 1) * Hx - x)) / (Hx * Hy)
            for j in range(J * sy, (J + 1) * sy):
                e = mesh.vertical_edge(ii, j)
                keep = w != 0
                rows.append(e[keep]); cols.append(np.full(keep.sum(), col)); vals.append(w[keep] * mesh.h_y)
            col += 1
    for J in range(1, m):
        for I in range(m):
            jj = np.arange((J - 1) * sy, (J + 1) * sy + 1)
            y = jj * mesh.h_y
            w = np.where(jj <= J * sy, (y - (J - 1) * Hy), ((J + 1) * Hy - y)) / (Hx * Hy)
            for i in range(I * sx, (I + 1) * sx):
                e = mesh.horizontal_edge(i, jj)
                keep = w != 0
                rows.append(e[keep]); cols.append(np.full(keep.sum(), col)); vals.append(w[keep] * mesh.h_x)
            col += 1
    if col == 0:
        return sp.csc_matrix((mesh.n_edges, 0))
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(mesh.n_edges, col))


def _columns(n_rows: int, blocks) -> sp.csc_matrix:
    """Stack (row_index, dense block) pairs into a sparse column matrix."""
    rows, cols, vals = [], [], []
    c0 = 0
    for idx, block in blocks:
        k = block.shape[1]
        if k == 0:
            continue
        r = np.repeat(idx, k)
        c = np.tile(np.arange(c0, c0 + k), idx.size)
        v = block.ravel()
        nz = v != 0
        rows.append(r[nz]); cols.append(c[nz]); vals.append(v[nz])
        c0 += k
    if c0 == 0:
        return sp.csc_matrix((n_rows, 0))
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n_rows, c0))


@dataclass
class CoarseSpaces:
    Sv: sp.csc_matrix
    Ven: sp.csc_matrix
    VRT: sp.csc_matrix
    Sp: sp.csc_matrix
    QRT: sp.csc_matrix
    u_par: np.ndarray
    p_par: np.ndarray
    n_loc: int
    with_enrichment: bool = True
    with_coarse_rt: bool = True

    @cached_property
    def V(self) -> sp.csc_matrix:
        return sp.csc_matrix(sp.hstack([self.Sv, self.Ven, self.VRT]))

    @cached_property
    def Q(self) -> sp.csc_matrix:
        return sp.csc_matrix(sp.hstack([self.Sp, self.QRT]))

    @property
    def n_velocity(self) -> int:
        return self.V.shape[1]

    @property
    def n_pressure(self) -> int:
        return self.Q.shape[1]

    @property
    def dof_count(self) -> int:
        """Coarse trial functions (velocity + pressure); the mean-zero multiplier is not counted."""
        return self.n_velocity + self.n_pressure


def assemble_coarse_spaces(locals_: list[LocalBasis], decomp: Decomposition,
                           with_enrichment: bool = True, with_coarse_rt: bool = True) -> CoarseSpaces:
    mesh = decomp.mesh
    if len(locals_) != decomp.M:
        raise ValueError(f"expected {decomp.M} local bases, got {len(locals_)}")
    n_locs = {lb.n_loc for lb in locals_}
    if len(n_locs) != 1:
        raise ValueError(f"inconsistent n_loc across subdomains: {sorted(n_locs)}")
    n_loc = n_locs.pop()
    sv, ven, spb = [], [], []
    for lb in locals_:
        vel = lb.velocity
        w = scale_edges_by_chi(mesh, decomp.pou[lb.index], vel.edges)
        sv.append((vel.edges, vel.modes * w[:, None]))
        ven.append((lb.enrichment.edges, lb.enrichment.fields))
        spb.append((lb.pressure.cells, lb.pressure.pressures))
    Sv = _columns(mesh.n_edges, sv)
    Ven = _columns(mesh.n_edges, ven) if with_enrichment else sp.csc_matrix((mesh.n_edges, 0))
    VRT = coarse_rt_columns(mesh, decomp.m) if with_coarse_rt else sp.csc_matrix((mesh.n_edges, 0))
    Sp = _columns(mesh.n_cells, spb)
    QRT = _columns(mesh.n_cells, [(reg.cells, np.ones((reg.n_cells, 1))) for reg in decomp.omega0])
    u_par, p_par = assemble_global_particular(locals_, decomp)
    return CoarseSpaces(Sv, Ven, VRT, Sp, QRT, u_par, p_par, n_loc, with_enrichment, with_coarse_rt)


def _orthonormalizer(C: sp.spmatrix, G: sp.spmatrix, rtol: float):
    """T with (C T)^T G (C T) = I spanning range(C) up to relative tolerance ``rtol``."""
    k = C.shape[1]
    if k == 0:
        return np.zeros((0, 0))
    gram = np.asarray((C.T @ (G @ C)).todense())
    d = np.sqrt(np.maximum(np.diag(gram), 0.0))
    d[d == 0] = 1.0
    gram = gram / d[:, None] / d[None, :]
    lam, U = la.eigh(0.5 * (gram + gram.T))
    keep = lam > rtol * max(lam.max(), 1e-300)
    return (U[:, keep] / np.sqrt(lam[keep])) / d[:, None]


@dataclass
class GfemSolution:
    u: np.ndarray
    p: np.ndarray
    coarse_dof_count: int
    effective_rank: tuple[int, int]
    residual: float
    singular: bool = False
    report: dict = field(default_factory=dict)


def solve_gfem(ops: FineOperators, f, gamma: float, spaces: CoarseSpaces, tol: float = 1e-8,
               on_singular: str = "raise", rank_rtol: float = 1e-12,
               singular_rtol: float = 1e-13) -> GfemSolution:
    """Galerkin projection of the augmented fine problem onto particular + coarse spaces."""
    if on_singular not in ("raise", "lstsq"):
        raise ValueError("on_singular must be 'raise' or 'lstsq'")
    mesh = ops.mesh
    area = mesh.cell_area
    fc = cell_values(mesh, f)
    Ag = ops.augmented(gamma)
    B = ops.B
    V, Q = spaces.V, spaces.Q
    w = np.full(mesh.n_cells, area)
    Tv = _orthonormalizer(V, ops.hdiv, rank_rtol)
    Tq = _orthonormalizer(Q, sp.identity(mesh.n_cells, format="csr") * area, rank_rtol)
    rv, rq = Tv.shape[1], Tq.shape[1]
    Vd = V @ Tv                     # dense fine-edge columns
    Qd = Q @ Tq
    Kvv = Vd.T @ (Ag @ Vd)
    Kqv = Qd.T @ (B @ Vd)
    wq = Qd.T @ w
    K = np.zeros((rv + rq + 1, rv + rq + 1))
    K[:rv, :rv] = 0.5 * (Kvv + Kvv.T)
    K[rv:rv + rq, :rv] = Kqv
    K[:rv, rv:rv + rq] = Kqv.T
    K[rv:rv + rq, -1] = wq
    K[-1, rv:rv + rq] = wq
    ru = -gamma * (B.T @ fc) - Ag @ spaces.u_par - B.T @ spaces.p_par
    rp = -fc * area - B @ spaces.u_par
    r = np.concatenate((Vd.T @ ru, Qd.T @ rp, [-(w @ spaces.p_par)]))

    singular = False
    s = la.svdvals(K) if K.size else np.zeros(0)
    if s.size and s[-1] <= singular_rtol * s[0]:
        singular = True
        if on_singular == "raise":
            raise SingularSystemError(
                f"coarse saddle system is rank deficient (sigma_min/sigma_max = {s[-1] / s[0]:.2e}); "
                "enrichment or coarse RT functions may be missing")
        x, *_ = la.lstsq(K, r, cond=singular_rtol)
    else:
        x = la.solve(K, r, assume_a="sym") if K.size else np.zeros(0)
    rnorm = np.linalg.norm(r)
    residual = float(np.linalg.norm(K @ x - r) / rnorm) if rnorm > 0 else 0.0
    if residual > tol and not singular:
        raise SingularSystemError(f"coarse residual {residual:.2e} exceeds tolerance {tol:.1e}")
    u = spaces.u_par + Vd @ x[:rv]
    p = spaces.p_par + Qd @ x[rv:rv + rq]
    p -= p.mean()
    report = {"cond": float(s[0] / s[-1]) if s.size and s[-1] > 0 else np.inf,
              "multiplier": float(x[-1]) if x.size else 0.0}
    return GfemSolution(u, p, spaces.dof_count, (rv, rq), residual, singular, report)


def estimate_infsup(spaces: CoarseSpaces, ops: FineOperators, max_dim: int = 4000,
                    rank_rtol: float = 1e-12) -> float:
    """Smallest singular value of b(., .) between H(div;a)-orthonormal coarse
    velocities and L2-orthonormal mean-zero coarse pressures."""
    if spaces.n_velocity + spaces.n_pressure > max_dim:
        raise ValueError(f"coarse spaces too large for a dense inf-sup estimate "
                         f"({spaces.n_velocity + spaces.n_pressure} > {max_dim})")
    mesh = ops.mesh
    area = mesh.cell_area
    Tv = _orthonormalizer(spaces.V, ops.hdiv, rank_rtol)
    Q = spaces.Q.toarray()
    Q = Q - Q.mean(axis=0)          # mean-zero part (uniform cells)
    Tq = _orthonormalizer(sp.csc_matrix(Q), sp.identity(mesh.n_cells, format="csr") * area, rank_rtol)
    if Tq.shape[1] == 0:
        return np.inf
    if Tq.shape[1] > Tv.shape[1]:
        return 0.0
    Vd = spaces.V @ Tv
    Qd = Q @ Tq
    C = Qd.T @ (ops.B @ Vd)
    return float(la.svdvals(C).min())


def compute_errors(ops: FineOperators, fine: FineSolution, u, p) -> tuple[float, float, float]:
    """Relative (velocity in the a-norm, pressure in L2, divergence in L2) errors."""
    du = u - fine.u
    dp = (p - p.mean()) - (fine.p - fine.p.mean())
    ref_v = float(fine.u @ (ops.M @ fine.u))
    ref_p = float(np.sum((fine.p - fine.p.mean()) ** 2))
    div_e = ops.B @ fine.u
    ref_d = float(div_e @ div_e)
    if ref_v <= 0 or ref_p <= 0 or ref_d <= 0:
        raise ValueError("reference solution has zero norm; relative errors undefined")
    ev = np.sqrt(max(float(du @ (ops.M @ du)), 0.0) / ref_v)
    ep = np.sqrt(float(dp @ dp) / ref_p)
    dd = ops.B @ du
    ed = np.sqrt(float(dd @ dd) / ref_d)
    return float(ev), float(ep), float(ed)


def mass_balance(decomp: Decomposition, ops: FineOperators, u, f) -> np.ndarray:
    """Per partition domain: integral of div u plus integral of f."""
    mesh = decomp.mesh
    net = ops.B @ u + cell_values(mesh, f) * mesh.cell_area
    return np.array([net[reg.cells].sum() for reg in decomp.omega0])


def check_compatible(mesh: FineMesh, f, tol: float = 1e-10) -> None:
    """Raise if the source does not integrate to zero (pure flux boundary)."""
    fc = cell_values(mesh, f)
    total = fc.sum() * mesh.cell_area
    if abs(total) > tol * max(1.0, np.abs(fc).sum() * mesh.cell_area):
        raise IncompatibleDataError(float(total))
