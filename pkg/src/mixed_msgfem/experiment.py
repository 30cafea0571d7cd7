"""Experiment orchestration: run configurations, sweeps, ablation, CSV and plot output."""
from __future__ import annotations

import csv
import dataclasses
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .coarse import (FineOperators, assemble_coarse_spaces, check_compatible, compute_errors,
                     estimate_infsup, fine_solve, mass_balance, solve_gfem)
from .decomposition import build_decomposition
from .fem import CoefficientField, cell_values
from .fields import (PATTERNS, example1_source, generate_highcontrast, load_raster, wells_source,
                     zero_source)
from .local_basis import BC_VARIANTS, build_all_local_bases
from .mesh import build_cartesian_mesh
from .saddle import NumericalError


class ConfigError(ValueError):
    pass


class PhaseError(RuntimeError):
    """A numerical failure tagged with the pipeline phase it came from."""

    def __init__(self, phase: str, exc: Exception):
        self.phase, self.cause = phase, exc
        super().__init__(f"[{phase}] {exc}")


@dataclass
class RunConfig:
    n: int = 32
    m: int = 4
    overlap: int = 2
    ell: int = 4
    n_loc: int = 8
    gamma: float | None = None          # None: 1 for a uniform coefficient, 1/alpha1 otherwise
    bc_variant: str = "dirichlet_pressure"
    coefficient: str = "uniform"        # uniform | uniform:<value> | channels | inclusions | checkerboard | file:<path>
    contrast: float = 1e3
    source: str = "example1"            # example1 | wells | zero | file:<path>
    with_enrichment: bool = True
    with_coarse_rt: bool = True
    tol: float = 1e-8
    output_dir: str = "out"
    seed: int = 0
    workers: int = 1
    infsup: bool = False
    dump_eigen: bool = False

    def validate(self) -> "RunConfig":
        for name in ("n", "m", "overlap", "ell", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n % self.m:
            raise ConfigError(f"m={self.m} must divide n={self.n}")
        if self.n_loc < 0:
            raise ConfigError(f"n_loc must be >= 0, got {self.n_loc}")
        if self.gamma is not None and not self.gamma >= 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.bc_variant not in BC_VARIANTS:
            raise ConfigError(f"bc_variant must be one of {BC_VARIANTS}")
        c = self.coefficient
        if not (c == "uniform" or c.startswith("uniform:") or c in PATTERNS or c.startswith("file:")):
            raise ConfigError(f"unknown coefficient spec {c!r}")
        s = self.source
        if not (s in ("example1", "wells", "zero") or s.startswith("file:")):
            raise ConfigError(f"unknown source spec {s!r}")
        if self.contrast < 1:
            raise ConfigError("contrast must be >= 1")
        return self

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw).validate()


def _parse_bool(s: str) -> bool:
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def coerce_config_value(name: str, raw):
    """Convert a string from a config file or command line to the field's type."""
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    if not isinstance(raw, str):
        return raw
    t = types[name]
    try:
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
        if t == "float | None":
            return None if raw.strip().lower() in ("", "auto", "none") else float(raw)
        if t == "bool":
            return _parse_bool(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from None


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for k, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"{path}:{k}: expected key=value, got {s!r}")
        key, val = (t.strip() for t in s.split("=", 1))
        key = key.replace("-", "_")
        try:
            out[key] = coerce_config_value(key, val)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{k}: {exc}") from None
    return out


def make_coefficient(cfg: RunConfig, mesh) -> CoefficientField:
    c = cfg.coefficient
    if c == "uniform":
        return CoefficientField.uniform(mesh)
    if c.startswith("uniform:"):
        return CoefficientField.uniform(mesh, float(c.split(":", 1)[1]))
    if c in PATTERNS:
        return generate_highcontrast(mesh.n_x, mesh.n_y, c, cfg.contrast, cfg.seed).to_coefficient(mesh)
    raster = load_raster(c.split(":", 1)[1])
    try:
        return raster.to_coefficient(mesh)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def make_source(cfg: RunConfig, mesh):
    s = cfg.source
    if s == "example1":
        return example1_source
    if s == "wells":
        return wells_source
    if s == "zero":
        return zero_source
    raster = load_raster(s.split(":", 1)[1], positive=False)
    try:
        return raster.cell_values(mesh)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


RESULT_FIELDS = [f.name for f in fields(RunConfig) if f.name not in ("output_dir", "dump_eigen")] + [
    "gamma_used", "error_v", "error_p", "error_div", "dofs_fine", "dofs_coarse", "rank_v", "rank_p",
    "beta", "mass_defect", "singular", "wall_ms_fine", "wall_ms_local", "wall_ms_coarse",
]
TIMING_FIELDS = ("wall_ms_fine", "wall_ms_local", "wall_ms_coarse")


@dataclass
class ResultRow:
    config: RunConfig
    gamma_used: float
    error_v: float
    error_p: float
    error_div: float
    dofs_fine: int
    dofs_coarse: int
    rank_v: int
    rank_p: int
    beta: float
    mass_defect: float
    singular: bool
    wall_ms_fine: float
    wall_ms_local: float
    wall_ms_coarse: float

    def as_dict(self) -> dict:
        d = {k: v for k, v in dataclasses.asdict(self.config).items() if k in RESULT_FIELDS}
        for k in RESULT_FIELDS[len(d):]:
            d[k] = getattr(self, k)
        return d


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if v is None:
        return "auto"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows: list[ResultRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_FIELDS)
        for r in rows:
            d = r.as_dict()
            w.writerow([_fmt(d[k]) for k in RESULT_FIELDS])


def write_plot_script(path, csv_name: str, axis: str, logx: bool = False) -> None:
    """gnuplot script drawing log2 of the relative errors against the sweep axis."""
    lines = [
        "# log2 of relative errors; run with: gnuplot -p plot.gp",
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{axis}'",
        "set ylabel 'log2(relative error)'",
        "set grid",
    ]
    if logx:
        lines.append("set logscale x")
    lines.append(
        f"plot '{csv_name}' using '{axis}':(log(column('error_v'))/log(2)) with linespoints title 'error_v', \\\n"
        f"     '' using '{axis}':(log(column('error_p'))/log(2)) with linespoints title 'error_p', \\\n"
        f"     '' using '{axis}':(log(column('error_div'))/log(2)) with linespoints title 'error_div'"
    )
    Path(path).write_text("\n".join(lines) + "\n")


class Experiment:
    """Shares the mesh, coefficient, fine operators, fine solutions and local
    bases between runs that differ only in n_loc, gamma or the ablation flags."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg.validate()
        self.mesh = build_cartesian_mesh(cfg.n, cfg.n)
        self.A = make_coefficient(cfg, self.mesh)
        self.f = cell_values(self.mesh, make_source(cfg, self.mesh))
        check_compatible(self.mesh, self.f)
        self.ops = FineOperators(self.mesh, self.A)
        self._fine = {}
        self._bases = {}

    def gamma_for(self, cfg: RunConfig) -> float:
        if cfg.gamma is not None:
            return cfg.gamma
        return 1.0 if self.A.contrast == 1.0 else 1.0 / self.A.alpha1

    def fine(self, gamma: float):
        if gamma not in self._fine:
            t0 = time.perf_counter()
            sol = _phase("fine", fine_solve, self.mesh, self.A, self.f, gamma, self.ops, self.cfg.tol)
            self._fine[gamma] = (sol, 1e3 * (time.perf_counter() - t0))
        return self._fine[gamma]

    def bases(self, cfg: RunConfig, n_loc: int):
        key = (cfg.m, cfg.ell, cfg.overlap, cfg.bc_variant)
        have = self._bases.get(key)
        if have is None or have[1][0].n_loc < n_loc:
            t0 = time.perf_counter()
            decomp = _phase("decomposition", build_decomposition, self.mesh, cfg.m, cfg.ell, cfg.overlap)
            loc = _phase("local", build_all_local_bases, self.mesh, self.A, self.f, decomp, n_loc,
                         cfg.bc_variant, cfg.workers)
            have = (decomp, loc, 1e3 * (time.perf_counter() - t0))
            self._bases[key] = have
        decomp, loc, ms = have
        return decomp, [lb.truncated(n_loc) for lb in loc], ms

    def run(self, cfg: RunConfig | None = None, on_singular: str = "raise",
            max_n_loc: int | None = None) -> ResultRow:
        cfg = (cfg or self.cfg).validate()
        gamma = self.gamma_for(cfg)
        fine, ms_fine = self.fine(gamma)
        decomp, loc, ms_local = self.bases(cfg, max(cfg.n_loc, max_n_loc or 0))
        loc = [lb.truncated(cfg.n_loc) for lb in loc]
        t0 = time.perf_counter()
        spaces = _phase("coarse", assemble_coarse_spaces, loc, decomp, cfg.with_enrichment,
                        cfg.with_coarse_rt)
        sol = _phase("coarse", solve_gfem, self.ops, self.f, gamma, spaces, cfg.tol, on_singular)
        ms_coarse = 1e3 * (time.perf_counter() - t0)
        if not (np.any(fine.u) or np.any(fine.p)) and not (np.any(sol.u) or np.any(sol.p)):
            ev = ep = ed = 0.0      # zero data: both solutions vanish identically
        else:
            ev, ep, ed = _phase("errors", compute_errors, self.ops, fine, sol.u, sol.p)
        beta = _phase("infsup", estimate_infsup, spaces, self.ops) if cfg.infsup else math.nan
        fnorm = float(np.linalg.norm(self.f * self.mesh.cell_area))
        defect = float(np.abs(mass_balance(decomp, self.ops, sol.u, self.f)).max()) / max(fnorm, 1e-300)
        if cfg.dump_eigen:
            dump_eigenvalues(loc, Path(cfg.output_dir) / "eigen")
        return ResultRow(cfg, gamma, ev, ep, ed, self.mesh.n_dofs, spaces.dof_count,
                         sol.effective_rank[0], sol.effective_rank[1], beta, defect, sol.singular,
                         ms_fine, ms_local, ms_coarse)


def _phase(name, fn, *args):
    try:
        return fn(*args)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        raise PhaseError(name, exc) from exc


def dump_eigenvalues(locals_, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for lb in locals_:
        lam = lb.velocity.eigenvalues
        with open(directory / f"subdomain_{lb.index:03d}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "lambda", "d_k_minus_1"])
            for k, v in enumerate(lam, start=1):
                w.writerow([k, repr(float(v)), repr(float(v ** -0.5))])


def run(cfg: RunConfig) -> ResultRow:
    return Experiment(cfg).run()


SWEEP_AXES = ("n_loc", "ell", "gamma")


def sweep(cfg: RunConfig, axis: str, values) -> list[ResultRow]:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}")
    values = list(values)
    if not values:
        raise ConfigError("sweep needs at least one value")
    exp = Experiment(cfg)
    cast = int if axis in ("n_loc", "ell") else float
    cfgs = [cfg.replace(**{axis: cast(v)}) for v in values]
    top = max(c.n_loc for c in cfgs)
    return [exp.run(c, max_n_loc=top) for c in cfgs]


def ablate_enrichment(cfg: RunConfig) -> list[ResultRow]:
    """The same configuration with and without the enrichment space."""
    exp = Experiment(cfg)
    rows = []
    for flag in (True, False):
        rows.append(exp.run(cfg.replace(with_enrichment=flag, infsup=True), on_singular="lstsq"))
    return rows


def fine_report(cfg: RunConfig) -> dict:
    """Fine solve only; for the constant-coefficient example also the L2 error to the closed form."""
    exp = Experiment(cfg)
    gamma = exp.gamma_for(cfg)
    sol, ms = exp.fine(gamma)
    out = {"n": cfg.n, "dofs_fine": exp.mesh.n_dofs, "residual": sol.residual, "wall_ms_fine": ms,
           "u_norm": float(np.sqrt(sol.u @ (exp.ops.M @ sol.u))),
           "p_norm": float(np.sqrt(exp.mesh.cell_area * np.sum(sol.p ** 2)))}
    if cfg.source == "example1" and exp.A.contrast == 1.0:
        from .fem import l2_error_to_exact
        from .fields import example1_exact

        ev, ep = l2_error_to_exact(exp.mesh, exp.A, sol.u, sol.p, example1_exact)
        out["error_v_exact"], out["error_p_exact"] = ev, ep
    return out
