"""Sparse saddle-point solves with flux constraints and pressure gauges, and
the dense generalized symmetric eigensolve used for the local spectral problems.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

GAUGES = ("none", "mean_zero_lagrange", "pin_then_shift")


class NumericalError(RuntimeError):
    """Base class for numerical failures of the method."""


class IncompatibleDataError(NumericalError):
    def __init__(self, defect: float):
        self.defect = defect
        super().__init__(f"incompatible data: source plus boundary flux defect = {defect:.3e}")


class SingularSystemError(NumericalError):
    pass


@dataclass
class SaddleProblem:
    """[A B^T; B 0] [u; p] = [rhs_u; rhs_p] with some velocity entries prescribed.

    ``rhs_u``/``rhs_p`` may be 2D (one column per right-hand side); the
    prescribed values ``fixed_values`` must then have matching columns.
    ``weights`` are the cell measures used by the mean-zero gauge.
    """

    A: sp.spmatrix
    B: sp.spmatrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fixed_values: np.ndarray | float = 0.0
    gauge: str = "mean_zero_lagrange"
    weights: np.ndarray | None = None
    compat_tol: float = 1e-9

    def __post_init__(self):
        if self.gauge not in GAUGES:
            raise ValueError(f"unknown gauge {self.gauge!r}")
        n_u, n_p = self.A.shape[0], self.B.shape[0]
        if self.A.shape != (n_u, n_u) or self.B.shape[1] != n_u:
            raise ValueError("inconsistent block shapes")
        if self.weights is None:
            self.weights = np.ones(n_p)


@dataclass
class SaddleReport:
    residual: float
    n_unknowns: int
    multiplier: np.ndarray | float = 0.0


class SaddleFactorization:
    """Factorized reduced system, reusable across right-hand sides."""

    def __init__(self, A, B, fixed, gauge: str, weights):
        A = sp.csr_matrix(A)
        B = sp.csr_matrix(B)
        n_u, n_p = A.shape[0], B.shape[0]
        fixed = np.asarray(fixed, dtype=np.int64)
        free = np.setdiff1d(np.arange(n_u), fixed)
        self.n_u, self.n_p = n_u, n_p
        self.fixed, self.free = fixed, free
        self.gauge = gauge
        self.weights = np.asarray(weights, dtype=float)
        self.A_ff = A[free][:, free]
        self.A_fc = A[free][:, fixed]
        self.B_f = sp.csr_matrix(B[:, free])
        self.B_c = sp.csr_matrix(B[:, fixed])
        # constants in the left kernel of B_f -> rhs_p has to be compatible
        col_sums = np.asarray(self.B_f.sum(axis=0)).ravel()
        scale = max(1.0, abs(self.B_f).max() if self.B_f.nnz else 1.0)
        self.needs_compat = bool(np.all(np.abs(col_sums) <= 1e-12 * scale))
        nf = free.size
        if gauge == "mean_zero_lagrange":
            w = sp.csr_matrix(self.weights.reshape(-1, 1))
            K = sp.bmat([[self.A_ff, self.B_f.T, None],
                         [self.B_f, None, w],
                         [None, w.T, None]], format="csc")
        elif gauge == "pin_then_shift":
            Bp = self.B_f[1:]
            K = sp.bmat([[self.A_ff, Bp.T], [Bp, None]], format="csc")
        else:
            K = sp.bmat([[self.A_ff, self.B_f.T], [self.B_f, None]], format="csc")
        self.K = K
        self.n_free = nf
        try:
            self.lu = spla.splu(K)
        except RuntimeError as exc:
            raise SingularSystemError(f"saddle factorization failed: {exc}") from exc

    def solve(self, rhs_u, rhs_p, fixed_values=0.0, compat_tol=1e-9, tol=1e-8):
        rhs_u = np.asarray(rhs_u, dtype=float)
        rhs_p = np.asarray(rhs_p, dtype=float)
        multi = rhs_u.ndim == 2
        if not multi:
            rhs_u = rhs_u[:, None]
            rhs_p = rhs_p[:, None]
        k = rhs_u.shape[1]
        fv = np.asarray(fixed_values, dtype=float)
        if self.fixed.size == 0:
            uc = np.zeros((0, k))
        elif fv.ndim == 0:
            uc = np.full((self.fixed.size, k), float(fv))
        else:
            uc = np.broadcast_to(fv.reshape(self.fixed.size, -1), (self.fixed.size, k))
        ru = rhs_u[self.free] - self.A_fc @ uc
        rp = rhs_p - self.B_c @ uc
        if self.needs_compat and self.gauge != "none":
            scale = np.maximum(1.0, np.abs(rp).sum(axis=0))
            defect = rp.sum(axis=0)
            bad = np.abs(defect) > compat_tol * scale
            if np.any(bad):
                raise IncompatibleDataError(float(defect[np.flatnonzero(bad)[0]]))
        nf = self.n_free
        if self.gauge == "mean_zero_lagrange":
            r = np.vstack((ru, rp, np.zeros((1, k))))
        elif self.gauge == "pin_then_shift":
            r = np.vstack((ru, rp[1:]))
        else:
            r = np.vstack((ru, rp))
        x = self.lu.solve(r)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError("saddle solve produced non-finite values")
        rnorm = np.linalg.norm(r, axis=0)
        res = np.linalg.norm(self.K @ x - r, axis=0) / np.where(rnorm > 0, rnorm, 1.0)
        residual = float(res.max())
        if residual > tol:
            raise SingularSystemError(f"saddle residual {residual:.2e} exceeds tolerance {tol:.1e}")
        u = np.empty((self.n_u, k))
        u[self.free] = x[:nf]
        u[self.fixed] = uc
        multiplier = 0.0
        if self.gauge == "mean_zero_lagrange":
            p = x[nf:nf + self.n_p]
            multiplier = x[-1]
        elif self.gauge == "pin_then_shift":
            p = np.vstack((np.zeros((1, k)), x[nf:]))
            p -= (self.weights @ p) / self.weights.sum()
        else:
            p = x[nf:]
        if not multi:
            u, p = u[:, 0], p[:, 0]
            multiplier = float(np.ravel(multiplier)[0]) if np.ndim(multiplier) else multiplier
        return u, p, SaddleReport(residual, self.K.shape[0], multiplier)


def solve_saddle(problem: SaddleProblem, tol: float = 1e-8):
    """Solve a saddle problem; returns (u, p, report).

    The prescribed velocity entries are reproduced exactly; with a
    mean-zero gauge the returned pressure has zero weighted mean.
    """
    fac = SaddleFactorization(problem.A, problem.B, problem.fixed, problem.gauge, problem.weights)
    return fac.solve(problem.rhs_u, problem.rhs_p, problem.fixed_values,
                     compat_tol=problem.compat_tol, tol=tol)


@dataclass
class EigenProblem:
    """K_big v = lambda K_small v on the span of ``basis`` columns (identity if None)."""

    stiffness_big: np.ndarray
    stiffness_small: np.ndarray
    count: int
    basis: np.ndarray | None = None
    allow_infinite: bool = False


def solve_generalized_eig(problem: EigenProblem):
    """Smallest ``count`` eigenpairs, ascending, normalized in the K_small inner product.

    Solved as the reciprocal problem K_small v = mu K_big v (K_big is
    positive definite on the subspace, K_small may be only semidefinite),
    then lambda = 1/mu. Returns (eigenvalues, coefficient matrix).
    """
    Kb = np.asarray(problem.stiffness_big, dtype=float)
    Ks = np.asarray(problem.stiffness_small, dtype=float)
    if problem.basis is not None:
        H = np.asarray(problem.basis, dtype=float)
        Kb = H.T @ Kb @ H
        Ks = H.T @ Ks @ H
    dim = Kb.shape[0]
    if problem.count > dim:
        raise ValueError(f"requested {problem.count} eigenpairs from a {dim}-dimensional space")
    if problem.count == 0 or dim == 0:
        return np.zeros(0), np.zeros((dim, 0))
    Kb = 0.5 * (Kb + Kb.T)
    Ks = 0.5 * (Ks + Ks.T)
    try:
        mu, vecs = la.eigh(Ks, Kb, subset_by_index=[dim - problem.count, dim - 1])
    except la.LinAlgError as exc:
        raise SingularSystemError(f"generalized eigensolve failed: {exc}") from exc
    order = np.argsort(-mu, kind="stable")
    mu, vecs = mu[order], vecs[:, order]
    small = mu <= 1e-12 * max(abs(mu).max(), 1e-300)
    if np.any(small) and not problem.allow_infinite:
        raise SingularSystemError(
            "small-domain form is numerically singular on the subspace "
            f"({int(small.sum())} near-zero directions)")
    # directions invisible to K_small get lambda = inf and stay K_big-normalized
    lam = np.full(mu.size, np.inf)
    lam[~small] = 1.0 / mu[~small]
    vecs[:, ~small] = vecs[:, ~small] / np.sqrt(mu[~small])  # K_small-normalized
    return lam, vecs
