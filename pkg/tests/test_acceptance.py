"""Acceptance criteria C1-C10; one PASS/FAIL line per criterion.

Run alone with ``python3 tests/test_acceptance.py`` or ``pytest tests/test_acceptance.py -s``.
C8 uses a user-supplied permeability slice when MSGFEM_SPE10_RASTER points at one;
otherwise it is evaluated on the substitute trend gates over a generated field.
"""
import functools
import os
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from mixed_msgfem.coarse import fine_solve
from mixed_msgfem.decomposition import build_decomposition
from mixed_msgfem.experiment import Experiment, RunConfig
from mixed_msgfem.fem import CoefficientField, assemble_div, assemble_mass, l2_error_to_exact
from mixed_msgfem.fields import example1_exact, example1_source
from mixed_msgfem.local_basis import build_local_basis
from mixed_msgfem.mesh import build_cartesian_mesh
from mixed_msgfem.saddle import SaddleProblem, solve_saddle

from conftest import ACCEPTANCE_LINES
from oracles import dense_oracle

# tolerances, fixed by the acceptance criteria
C1_RATIO = (1.7, 2.3)
C1_SECONDS = 10.0
C2_TOL, C2_SECONDS = 1e-8, 30.0
C3_FACTOR, C3_SECONDS = 2.0 ** -6, 300.0
C4_RATIO = 1e-2
C5_ERROR_FACTOR, C5_BETA_FACTOR = 10.0, 1e2
C6_TOL = 1e-10
C7_FINE, C7_COARSE = 173280, 744
C8_EV, C8_EV_TOL = 1.68e-2, 0.5e-2
C8_EP, C8_EP_TOL = 0.24e-2, 0.2e-2
C10_TOL = 1e-10
MONOTONE_SLACK = 1.05
DECREASE_TOL = 1e-10       # d_n equal up to round-off (symmetric pairs) counts as nonincreasing

MASS_DEFECTS = []          # (label, defect) of every multiscale run in this module


def record(cid, ok, text):
    line = f"{cid} {'PASS' if ok else 'FAIL'}: {text}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def run(exp, label, **kw):
    on_singular = kw.pop("on_singular", "raise")
    max_n_loc = kw.pop("max_n_loc", None)
    row = exp.run(exp.cfg.replace(**kw), on_singular=on_singular, max_n_loc=max_n_loc)
    MASS_DEFECTS.append((label, row.mass_defect))
    return row


@functools.lru_cache(maxsize=None)
def example1_experiment():
    return Experiment(RunConfig(n=100, m=4, ell=6, overlap=2, n_loc=16, gamma=1.0))


@functools.lru_cache(maxsize=None)
def channels_experiment():
    return Experiment(RunConfig(n=120, m=6, ell=6, overlap=2, n_loc=8, coefficient="channels",
                                contrast=1e3, seed=1))


def n_widths(exp, ell):
    cfg = exp.cfg
    _, locs, _ = exp._bases[(cfg.m, ell, cfg.overlap, cfg.bc_variant)]
    return [lb.velocity.n_widths() for lb in locs]


def decay_gates(exp, cid, label, n_locs=tuple(range(2, 17)), top=16):
    """error_v over n_loc at the configured ell, the ell=2 comparison at n_loc=10, and the n-widths."""
    ell = exp.cfg.ell
    ev = {k: run(exp, f"{label} n_loc={k}", n_loc=k, max_n_loc=top).error_v for k in n_locs}
    ev_l2 = run(exp, f"{label} ell=2", ell=2, n_loc=10).error_v
    ks = np.array(n_locs, dtype=float)
    slope = np.polyfit(ks, np.log2([ev[k] for k in n_locs]), 1)[0]
    ratio = ev[12] / ev[4]
    d = n_widths(exp, ell)
    d_ratio = max(w[12] / w[2] for w in d)
    monotone = all(np.all(np.diff(w[:13]) <= DECREASE_TOL * w[0]) for w in d)
    steps = [ev[b] / ev[a] for a, b in zip(n_locs, n_locs[1:])]
    return dict(ev=ev, ev_l2=ev_l2, slope=slope, ratio=ratio, d_ratio=d_ratio, d_monotone=monotone,
                max_step=max(steps))


@functools.lru_cache(maxsize=None)
def example1_gates():
    exp = example1_experiment()
    t0 = time.perf_counter()
    g = decay_gates(exp, "C3", "example1")
    g["seconds"] = time.perf_counter() - t0
    return g


def test_c1_fine_convergence():
    t0 = time.perf_counter()
    err = []
    for n in (16, 32):
        mesh = build_cartesian_mesh(n, n)
        A = CoefficientField.uniform(mesh)
        sol = fine_solve(mesh, A, example1_source)
        err.append(l2_error_to_exact(mesh, A, sol.u, sol.p, example1_exact)[0])
    dt = time.perf_counter() - t0
    r = err[0] / err[1]
    ok = C1_RATIO[0] <= r <= C1_RATIO[1] and dt < C1_SECONDS
    record("C1", ok, f"fine velocity error h=1/16 {err[0]:.4e}, h=1/32 {err[1]:.4e}, ratio {r:.3f} "
                     f"(need [{C1_RATIO[0]}, {C1_RATIO[1]}]); {dt:.2f}s (< {C1_SECONDS}s)")


def test_c2_full_basis_exactness():
    t0 = time.perf_counter()
    exp = Experiment(RunConfig(n=16, m=2, ell=7, overlap=2, n_loc=0, coefficient="inclusions", seed=3))
    from mixed_msgfem.local_basis import build_harmonic_stream_space
    dims = {build_harmonic_stream_space(exp.mesh, exp.A, build_decomposition(exp.mesh, 2, 7, 2), i).dim
            for i in range(4)}
    assert len(dims) == 1
    row = run(exp, "C2", n_loc=dims.pop())
    dt = time.perf_counter() - t0
    ok = row.error_v <= C2_TOL and row.error_p <= C2_TOL and dt < C2_SECONDS
    record("C2", ok, f"inclusions, n=16 m=2 ell=7 (omega*=Omega) n_loc={row.config.n_loc}: error_v {row.error_v:.2e}, "
                     f"error_p {row.error_p:.2e} (<= {C2_TOL:g}); {dt:.2f}s (< {C2_SECONDS}s)")


def test_c3_exponential_decay():
    g = example1_gates()
    ev = g["ev"]
    ok_ratio = g["ratio"] <= C3_FACTOR
    ok_slope = g["slope"] < 0
    ok_ell = ev[10] <= g["ev_l2"]
    ok = ok_ratio and ok_slope and ok_ell and g["seconds"] < C3_SECONDS
    table = " ".join(f"{k}:{v:.3e}" for k, v in ev.items())
    record("C3", ok, f"n=100 m=4 ell=6 gamma=1: e(12)/e(4) = {g['ratio']:.4f} (need <= {C3_FACTOR:.4f}) "
                     f"[{'ok' if ok_ratio else 'unmet'}]; log2-slope {g['slope']:.3f} (need < 0) "
                     f"[{'ok' if ok_slope else 'unmet'}]; n_loc=10: e(ell=6) {ev[10]:.3e} <= e(ell=2) "
                     f"{g['ev_l2']:.3e} [{'ok' if ok_ell else 'unmet'}]; {g['seconds']:.0f}s; error_v {table}")


def test_c4_nwidth_decay():
    g = example1_gates()
    ok = g["d_monotone"] and g["d_ratio"] < C4_RATIO
    record("C4", ok, f"n=100 m=4 ell=6: max_i d12/d2 = {g['d_ratio']:.3e} (need < {C4_RATIO:g}); "
                     f"d_n nonincreasing on every subdomain: {g['d_monotone']}")


def test_c5_enrichment_ablation():
    exp = channels_experiment()
    with_ = run(exp, "C5 with V_en", with_enrichment=True, infsup=True, on_singular="lstsq")
    without = run(exp, "C5 without V_en", with_enrichment=False, infsup=True, on_singular="lstsq")
    er = without.error_v / with_.error_v
    br = with_.beta / max(without.beta, 1e-300)
    ok = er >= C5_ERROR_FACTOR and br >= C5_BETA_FACTOR
    record("C5", ok, f"channels contrast 1e3, n=120 m=6 ell=6 n_loc=8 gamma={with_.gamma_used:g}: "
                     f"error_v {with_.error_v:.3e} -> {without.error_v:.3e} without V_en (x{er:.1f}, need >= "
                     f"{C5_ERROR_FACTOR:g}); beta {with_.beta:.3e} -> {without.beta:.3e} (/{br:.3g}, need >= "
                     f"{C5_BETA_FACTOR:g})")


def test_c7_dof_bookkeeping():
    t0 = time.perf_counter()
    exp = Experiment(RunConfig(n=240, m=6, ell=15, overlap=2, n_loc=6, coefficient="channels",
                               contrast=1e3, seed=1))
    row = run(exp, "C7 n=240")
    dt = time.perf_counter() - t0
    ok = row.dofs_fine == C7_FINE and row.dofs_coarse == C7_COARSE
    record("C7", ok, f"h=1/240: fine unknowns {row.dofs_fine} (need {C7_FINE}); m=6 n_loc=6: coarse "
                     f"unknowns {row.dofs_coarse} (need {C7_COARSE}); error_v {row.error_v:.3e} "
                     f"error_p {row.error_p:.3e} on the generated field; {dt:.0f}s")


def test_c8_field_slice_point():
    path = os.environ.get("MSGFEM_SPE10_RASTER")
    if path:
        exp = Experiment(RunConfig(n=240, m=6, ell=15, overlap=2, n_loc=6, coefficient=f"file:{path}",
                                   source="wells"))
        row = run(exp, "C8 slice")
        ok = abs(row.error_v - C8_EV) <= C8_EV_TOL and abs(row.error_p - C8_EP) <= C8_EP_TOL
        record("C8", ok, f"slice {path}: error_v {100 * row.error_v:.2f}% (need 1.68 +- 0.5), "
                         f"error_p {100 * row.error_p:.2f}% (need 0.24 +- 0.2)")
        return
    # substitute: gates 3-6 on the generated channels field
    exp = channels_experiment()
    g = decay_gates(exp, "C8", "channels")
    with_ = run(exp, "C8 with V_en", n_loc=8, infsup=True, on_singular="lstsq")
    without = run(exp, "C8 without V_en", n_loc=8, with_enrichment=False, infsup=True, on_singular="lstsq")
    er, br = without.error_v / with_.error_v, with_.beta / max(without.beta, 1e-300)
    mass = max(d for lbl, d in MASS_DEFECTS if lbl.startswith("C8") and "without" not in lbl)
    gates = {
        "3:ratio": g["ratio"] <= C3_FACTOR, "3:slope": g["slope"] < 0, "3:ell": g["ev"][10] <= g["ev_l2"],
        "4": g["d_monotone"] and g["d_ratio"] < C4_RATIO,
        "5": er >= C5_ERROR_FACTOR and br >= C5_BETA_FACTOR,
        "6": mass <= C6_TOL,
    }
    ok = all(gates.values())
    status = " ".join(f"{k}={'ok' if v else 'unmet'}" for k, v in gates.items())
    record("C8", ok, f"SUBSTITUTED (no slice in MSGFEM_SPE10_RASTER): gates on channels n=120 m=6 ell=6 -> "
                     f"{status}; e12/e4 {g['ratio']:.4f}, slope {g['slope']:.3f}, e(ell=6) {g['ev'][10]:.3e} vs "
                     f"e(ell=2) {g['ev_l2']:.3e}, d12/d2 {g['d_ratio']:.3e}, ablation x{er:.1f} /{br:.3g}, "
                     f"mass {mass:.1e}")


def test_c9_gamma_robustness():
    exp = channels_experiment()
    rows = {}
    failures = []
    for gamma in (0.0, 1e-6, 1e-3, 1e-1, 1.0):
        try:
            rows[gamma] = run(exp, f"C9 gamma={gamma:g}", gamma=gamma)
        except Exception as exc:  # a crash is a criterion failure, reported on the line
            failures.append(f"gamma={gamma:g}: {exc}")
    ok_trend = 1e-1 in rows and 1e-6 in rows and rows[1e-1].error_div <= rows[1e-6].error_div
    ok = not failures and ok_trend
    table = " ".join(f"{g:g}:{r.error_div:.3e}" for g, r in rows.items())
    record("C9", ok, f"channels n=120 m=6 ell=6 n_loc=8: runs completed {len(rows)}/5 "
                     f"{'; '.join(failures)}; error_div(0.1) <= error_div(1e-6): {ok_trend}; error_div {table}")


def test_c6_local_mass_conservation():
    if not MASS_DEFECTS:
        exp = Experiment(RunConfig(n=32, m=4, ell=2, n_loc=4))
        run(exp, "C6 standalone")
    worst = max(MASS_DEFECTS, key=lambda t: t[1])
    ok = worst[1] <= C6_TOL
    record("C6", ok, f"{len(MASS_DEFECTS)} runs: max_i |int div u_G + int f| / ||f|| = {worst[1]:.2e} "
                     f"({worst[0]}; need <= {C6_TOL:g})")


def test_monotone_n_loc_gate():
    g = example1_gates()
    ok = g["max_step"] <= MONOTONE_SLACK
    record("MONO", ok, f"constant coefficient n=100 m=4 ell=6: max error_v(n_loc+1)/error_v(n_loc) = {g['max_step']:.3f} "
                       f"(need <= {MONOTONE_SLACK})")


@st.composite
def small_cases(draw):
    m = draw(st.integers(1, 3))
    n = m * draw(st.integers(2, 4))
    return n, m, draw(st.integers(1, 3)), draw(st.integers(0, 2 ** 31))


def test_c10_invariant_suite():
    failures = []

    @settings(max_examples=25, deadline=None, suppress_health_check=list(HealthCheck), database=None)
    @given(small_cases())
    def pipeline_invariants(case):
        n, m, ell, seed = case
        mesh = build_cartesian_mesh(n, n)
        rng = np.random.default_rng(seed)
        A = CoefficientField(np.exp(rng.normal(size=mesh.n_cells)))
        dec = build_decomposition(mesh, m, ell, 1)
        assert np.abs(dec.pou.sum(axis=0) - 1).max() <= C10_TOL
        for i in range(dec.M):
            lb = build_local_basis(mesh, A, example1_source, dec, i, 0)
            dim = lb.velocity.harmonic_dim
            if dim == 0:
                continue
            lb = build_local_basis(mesh, A, example1_source, dec, i, min(dim, 4))
            star = dec.omega_star[i]
            Bs = assemble_div(mesh, star)[star.cells][:, star.edges]
            modes = lb.velocity.star_modes
            assert np.abs(Bs @ modes).max() <= C10_TOL * max(1, np.abs(modes).max())
            lam = lb.velocity.eigenvalues
            assert np.all(np.diff(lam) >= 0) and lam[0] >= 1 - C10_TOL
            P = lb.pressure.pressures
            assert np.abs(P.sum(axis=0)).max() <= C10_TOL * max(1, np.abs(P).max()) * P.shape[0]
            om0 = dec.omega0[i]
            B0 = assemble_div(mesh, om0)[om0.cells][:, om0.edges]
            assert np.abs(B0 @ lb.enrichment.fields / mesh.cell_area - P).max() <= C10_TOL * max(1, np.abs(P).max())

    @settings(max_examples=40, deadline=None, database=None)
    @given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2 ** 31))
    def saddle_matches_dense(nx, ny, seed):
        mesh = build_cartesian_mesh(nx, ny)
        if mesh.n_dofs > 200:
            return
        rng = np.random.default_rng(seed)
        A = CoefficientField(np.exp(rng.normal(size=mesh.n_cells)))
        M, B = assemble_mass(mesh, A), assemble_div(mesh)
        fixed = mesh.boundary_edges
        uc = rng.normal(size=fixed.size)
        rp = rng.normal(size=mesh.n_cells)
        rp -= (rp - B[:, fixed] @ uc).sum() / mesh.n_cells
        ru = rng.normal(size=mesh.n_edges)
        w = np.full(mesh.n_cells, mesh.cell_area)
        u, p, _ = solve_saddle(SaddleProblem(M, B, ru, rp, fixed, uc, "mean_zero_lagrange", w))
        uo, po = dense_oracle(M, B, ru, rp, fixed, uc, w)
        assert np.abs(u - uo).max() <= C10_TOL * max(1, np.abs(uo).max())
        assert np.abs(p - po).max() <= C10_TOL * max(1, np.abs(po).max())

    for name, check in (("pipeline invariants", pipeline_invariants), ("dense saddle oracle", saddle_matches_dense)):
        try:
            check()
        except Exception as exc:
            failures.append(f"{name}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
    record("C10", not failures,
           "divergence-free modes, eigenvalues >= 1 ascending, PU sum 1, mean-zero pressures, enrichment "
           f"divergence identity, dense saddle oracle <= 200 DOFs to {C10_TOL:g}"
           + (f"; failures: {failures}" if failures else ""))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
