"""Per-subdomain constructions: particular pair, discrete a-harmonic stream
space, spectral velocity basis, reconstructed pressures and enrichment fields.

All local vectors are stored on an explicit index set (``edges`` or
``cells``, global numbering, sorted) rather than as full-length arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .decomposition import Decomposition
from .fem import CoefficientField, assemble_div, assemble_mass, cell_values, curl_matrix
from .mesh import CellRegion, FineMesh, region_boundary_split
from .saddle import (EigenProblem, IncompatibleDataError, SaddleFactorization, SaddleProblem,
                     solve_generalized_eig, solve_saddle)

BC_VARIANTS = ("dirichlet_pressure", "constant_flux")


def _pos(index: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Positions of ``values`` inside the sorted array ``index``."""
    p = np.searchsorted(index, values)
    if np.any(p >= index.size) or np.any(index[np.minimum(p, index.size - 1)] != values):
        raise KeyError("index lookup outside the local set")
    return p


def local_mass(mesh: FineMesh, A: CoefficientField, region: CellRegion, edges=None):
    edges = region.edges if edges is None else edges
    return sp.csr_matrix(assemble_mass(mesh, A, region)[edges][:, edges])


def local_div(mesh: FineMesh, region: CellRegion, edges=None):
    edges = region.edges if edges is None else edges
    return sp.csr_matrix(assemble_div(mesh, region)[region.cells][:, edges])


@dataclass
class LocalParticular:
    edges: np.ndarray        # edges of omega_i
    u_par: np.ndarray
    cells: np.ndarray        # cells of omega_i^0
    p_par: np.ndarray
    star_edges: np.ndarray   # edges of omega_i^*, with the full local solve
    psi: np.ndarray
    star_cells: np.ndarray
    phi: np.ndarray


def solve_particular(mesh: FineMesh, A: CoefficientField, f, decomp: Decomposition, i: int,
                     bc_variant: str = "dirichlet_pressure") -> LocalParticular:
    """Local mixed problem with the source on omega_i^* (zero flux on the
    domain boundary), restricted to omega_i (velocity) and omega_i^0 (pressure,
    shifted to zero mean)."""
    if bc_variant not in BC_VARIANTS:
        raise ValueError(f"unknown bc_variant {bc_variant!r}")
    star = decomp.omega_star[i]
    E, Cs = star.edges, star.cells
    f_cells = cell_values(mesh, f)
    Mloc = local_mass(mesh, A, star)
    Bloc = local_div(mesh, star)
    rhs_p = -f_cells[Cs] * mesh.cell_area
    on_dom, on_int = region_boundary_split(mesh, star)
    weights = np.full(Cs.size, mesh.cell_area)
    if bc_variant == "dirichlet_pressure" and on_int.size:
        problem = SaddleProblem(Mloc, Bloc, np.zeros(E.size), rhs_p, fixed=_pos(E, on_dom),
                                fixed_values=0.0, gauge="none", weights=weights)
    else:
        fixed = np.concatenate((on_dom, on_int))
        values = np.zeros(fixed.size)
        if on_int.size:
            c_comp = -(f_cells[Cs].sum() * mesh.cell_area) / mesh.edge_lengths[on_int].sum()
            sign = star.outward_sign[_pos(star.boundary_edges, on_int)]
            values[on_dom.size:] = c_comp * mesh.edge_lengths[on_int] * sign
        order = np.argsort(fixed)
        problem = SaddleProblem(Mloc, Bloc, np.zeros(E.size), rhs_p, fixed=_pos(E, fixed[order]),
                                fixed_values=values[order], gauge="mean_zero_lagrange",
                                weights=weights)
    psi, phi, _ = solve_saddle(problem)
    om, om0 = decomp.omega[i], decomp.omega0[i]
    u_par = psi[_pos(E, om.edges)]
    p0 = phi[_pos(Cs, om0.cells)]
    p_par = p0 - p0.mean()
    return LocalParticular(om.edges, u_par, om0.cells, p_par, E, psi, Cs, phi)


@dataclass
class HarmonicStreamSpace:
    """Basis of discretely A^{-1}-harmonic bilinear stream functions on omega^*.

    Nodes on the domain boundary are tied together per connected piece of
    (boundary of omega^*) cap (boundary of Omega), so that their curls have zero
    normal flux there; constants are removed by fixing one generator to zero.
    """

    nodes: np.ndarray            # region nodes (global ids)
    basis: np.ndarray            # (len(nodes), dim)
    interface_nodes: np.ndarray
    interior_nodes: np.ndarray
    boundary_components: list[np.ndarray]
    curl: sp.csr_matrix          # region edges x region nodes
    stiffness: sp.csr_matrix     # curl^T M_{omega*} curl on region nodes

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


def build_harmonic_stream_space(mesh: FineMesh, A: CoefficientField, decomp: Decomposition,
                                i: int) -> HarmonicStreamSpace:
    star = decomp.omega_star[i]
    E, nodes = star.edges, star.nodes
    curl = sp.csr_matrix(curl_matrix(mesh)[E][:, nodes])
    Mstar = local_mass(mesh, A, star)
    K = sp.csr_matrix(curl.T @ Mstar @ curl)

    on_dom, on_int = region_boundary_split(mesh, star)
    en = mesh.edge_nodes
    tied = np.unique(en[on_dom]) if on_dom.size else np.zeros(0, dtype=np.int64)
    components = []
    if tied.size:
        a, b = _pos(tied, en[on_dom, 0]), _pos(tied, en[on_dom, 1])
        g = sp.coo_matrix((np.ones(a.size), (a, b)), shape=(tied.size, tied.size))
        n_comp, labels = connected_components(g, directed=False)
        components = [tied[labels == c] for c in range(n_comp)]
    interface = np.setdiff1d(np.unique(en[on_int]) if on_int.size else np.zeros(0, np.int64), tied)
    on_bnd = np.unique(en[star.boundary_edges])
    interior = np.setdiff1d(nodes, on_bnd)

    n_gen = interface.size + len(components)
    G = np.zeros((nodes.size, n_gen))
    G[_pos(nodes, interface), np.arange(interface.size)] = 1.0
    for c, comp in enumerate(components):
        G[_pos(nodes, comp), interface.size + c] = 1.0
    # constant gauge: drop one generator
    drop = interface.size if components else 0
    G = np.delete(G, drop, axis=1)

    I = _pos(nodes, interior)
    if I.size and G.shape[1]:
        gamma = np.setdiff1d(np.arange(nodes.size), I)
        K_II = sp.csc_matrix(K[I][:, I])
        K_IG = K[I][:, gamma]
        lu = spla.splu(K_II)
        G[I] = -lu.solve(np.asarray(K_IG @ G[gamma]))
    return HarmonicStreamSpace(nodes, G, interface, interior, components, curl, K)


@dataclass
class LocalVelocityBasis:
    edges: np.ndarray            # edges of omega_i
    modes: np.ndarray            # (len(edges), n) restricted eigenfunctions
    eigenvalues: np.ndarray      # ascending; may hold one more value than modes
    star_edges: np.ndarray
    star_modes: np.ndarray       # eigenfunctions on omega_i^*
    harmonic_dim: int

    @property
    def n_loc(self) -> int:
        return self.modes.shape[1]

    def n_widths(self) -> np.ndarray:
        """d_n = lambda_{n+1}^{-1/2} for n = 0 .. len(eigenvalues) - 1."""
        return self.eigenvalues ** -0.5


def local_eigenproblem(mesh: FineMesh, A: CoefficientField, decomp: Decomposition, i: int,
                       space: HarmonicStreamSpace | None = None):
    """Projected (K_big, K_small) of the stream-function eigenproblem on the harmonic basis."""
    if space is None:
        space = build_harmonic_stream_space(mesh, A, decomp, i)
    star = decomp.omega_star[i]
    M_om = local_mass(mesh, A, decomp.omega[i], edges=star.edges)
    K_small = space.curl.T @ (M_om @ space.curl)
    H = space.basis
    Kb = H.T @ (space.stiffness @ H)
    Ks = H.T @ (K_small @ H)
    return space, Kb, Ks


def solve_local_eigen(mesh: FineMesh, A: CoefficientField, decomp: Decomposition, i: int,
                      n_loc: int, space: HarmonicStreamSpace | None = None,
                      extra: int = 1) -> LocalVelocityBasis:
    """First ``n_loc`` eigenfunctions of a_{omega*}(v, w) = lambda a_{omega}(v, w)
    on the harmonic space, mapped through the curl. Up to ``extra`` further
    eigenvalues are kept for the n-width of the selected space."""
    space, Kb, Ks = local_eigenproblem(mesh, A, decomp, i, space)
    dim = space.dim
    if n_loc > dim:
        raise ValueError(f"n_loc={n_loc} exceeds the local harmonic dimension {dim} "
                         f"of subdomain {i}")
    count = min(n_loc + extra, dim)
    lam, X = solve_generalized_eig(EigenProblem(Kb, Ks, count, allow_infinite=True))
    X = X[:, :n_loc]
    star_modes = space.curl @ (space.basis @ X)
    E = decomp.omega_star[i].edges
    om_edges = decomp.omega[i].edges
    modes = star_modes[_pos(E, om_edges)]
    # modes with lambda = inf vanish on omega; drop the round-off left there
    modes[:, np.isinf(lam[:n_loc])] = 0.0
    return LocalVelocityBasis(om_edges, modes, lam, E, star_modes, dim)


class PartitionDomainSolver:
    """Shared factorization on omega_i^0 with all boundary fluxes prescribed.

    Serves both the pressure reconstruction (boundary flux = mode flux,
    zero divergence) and the enrichment problems (zero flux, divergence =
    pressure mode).
    """

    def __init__(self, mesh: FineMesh, A: CoefficientField, region: CellRegion):
        self.mesh, self.region = mesh, region
        E = region.edges
        self.M = local_mass(mesh, A, region)
        self.B = local_div(mesh, region)
        self.fixed = _pos(E, region.boundary_edges)
        self.weights = np.full(region.n_cells, mesh.cell_area)
        self.fac = SaddleFactorization(self.M, self.B, self.fixed, "mean_zero_lagrange",
                                       self.weights)

    def solve(self, rhs_p, boundary_flux=0.0):
        k = rhs_p.shape[1]
        return self.fac.solve(np.zeros((self.region.edges.size, k)), rhs_p, boundary_flux)


@dataclass
class LocalPressureBasis:
    cells: np.ndarray            # cells of omega_i^0
    pressures: np.ndarray        # (len(cells), n), each with zero mean
    recovered: np.ndarray        # reconstructed velocities on omega_i^0 edges


def reconstruct_pressures(mesh: FineMesh, A: CoefficientField, decomp: Decomposition, i: int,
                          basis: LocalVelocityBasis,
                          solver: PartitionDomainSolver | None = None) -> LocalPressureBasis:
    om0 = decomp.omega0[i]
    solver = solver or PartitionDomainSolver(mesh, A, om0)
    n = basis.n_loc
    if n == 0:
        return LocalPressureBasis(om0.cells, np.zeros((om0.n_cells, 0)), np.zeros((om0.edges.size, 0)))
    flux = basis.modes[_pos(basis.edges, om0.boundary_edges)]
    v, p, _ = solver.solve(np.zeros((om0.n_cells, n)), flux)
    return LocalPressureBasis(om0.cells, p, v)


@dataclass
class LocalEnrichment:
    edges: np.ndarray            # edges of omega_i^0
    fields: np.ndarray           # (len(edges), n), zero flux on the boundary of omega_i^0
    stability: np.ndarray        # ||u||_{H(div;a)} / ||p|| per field (nan for p = 0)


def build_enrichment(mesh: FineMesh, A: CoefficientField, decomp: Decomposition, i: int,
                     pressures: LocalPressureBasis,
                     solver: PartitionDomainSolver | None = None,
                     mean_tol: float = 1e-9) -> LocalEnrichment:
    """Zero-flux Neumann problems on omega_i^0 with divergence equal to each pressure mode."""
    om0 = decomp.omega0[i]
    solver = solver or PartitionDomainSolver(mesh, A, om0)
    P = pressures.pressures
    n = P.shape[1]
    if n == 0:
        return LocalEnrichment(om0.edges, np.zeros((om0.edges.size, 0)), np.zeros(0))
    area = mesh.cell_area
    scale = np.maximum(np.abs(P).sum(axis=0), 1e-300)
    mean_defect = P.sum(axis=0) / scale
    if np.any(np.abs(mean_defect) > mean_tol):
        raise IncompatibleDataError(float(P.sum(axis=0)[np.argmax(np.abs(mean_defect))] * area))
    u, _, _ = solver.solve(P * area, 0.0)
    Mu = solver.M @ u
    div = (solver.B @ u) / area
    unorm = np.sqrt(np.einsum("ij,ij->j", u, Mu) + area * (div ** 2).sum(axis=0))
    pnorm = np.sqrt(area * (P ** 2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        stab = np.where(pnorm > 0, unorm / pnorm, np.nan)
    return LocalEnrichment(om0.edges, u, stab)


@dataclass
class LocalBasis:
    index: int
    particular: LocalParticular
    velocity: LocalVelocityBasis
    pressure: LocalPressureBasis
    enrichment: LocalEnrichment
    timings: dict = field(default_factory=dict)

    @property
    def n_loc(self) -> int:
        return self.velocity.n_loc

    def truncated(self, n: int) -> "LocalBasis":
        """The same construction with only the first ``n`` eigenfunctions."""
        if n > self.n_loc:
            raise ValueError(f"cannot truncate {self.n_loc} modes to {n}")
        v, p, e = self.velocity, self.pressure, self.enrichment
        return LocalBasis(
            self.index,
            self.particular,
            LocalVelocityBasis(v.edges, v.modes[:, :n], v.eigenvalues, v.star_edges,
                               v.star_modes[:, :n], v.harmonic_dim),
            LocalPressureBasis(p.cells, p.pressures[:, :n], p.recovered[:, :n]),
            LocalEnrichment(e.edges, e.fields[:, :n], e.stability[:n]),
            self.timings,
        )


def build_local_basis(mesh: FineMesh, A: CoefficientField, f, decomp: Decomposition, i: int,
                      n_loc: int, bc_variant: str = "dirichlet_pressure") -> LocalBasis:
    """Full local pipeline for subdomain ``i``."""
    import time

    t = {}
    t0 = time.perf_counter()
    part = solve_particular(mesh, A, f, decomp, i, bc_variant)
    t["particular"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    vel = solve_local_eigen(mesh, A, decomp, i, n_loc)
    t["eigen"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    solver = PartitionDomainSolver(mesh, A, decomp.omega0[i])
    pres = reconstruct_pressures(mesh, A, decomp, i, vel, solver)
    enr = build_enrichment(mesh, A, decomp, i, pres, solver)
    t["pressure_enrichment"] = time.perf_counter() - t0
    return LocalBasis(i, part, vel, pres, enr, t)


def build_all_local_bases(mesh, A, f, decomp, n_loc, bc_variant="dirichlet_pressure",
                          workers: int = 1) -> list[LocalBasis]:
    """Independent per-subdomain pipelines; results ordered by subdomain index."""
    idx = range(decomp.M)
    if workers <= 1:
        return [build_local_basis(mesh, A, f, decomp, i, n_loc, bc_variant) for i in idx]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda i: build_local_basis(mesh, A, f, decomp, i, n_loc, bc_variant), idx))
