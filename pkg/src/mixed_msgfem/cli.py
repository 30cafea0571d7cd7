"""Command-line driver.

    python3 -m mixed_msgfem run --n 100 --m 4 --ell 6 --n-loc 12
    python3 -m mixed_msgfem sweep --axis n_loc --values 2,4,6,8 --n 100 --m 4 --ell 6
    python3 -m mixed_msgfem ablate --coefficient channels --contrast 1e3 --n 120 --m 6 --ell 6
    python3 -m mixed_msgfem gen-field --pattern channels --nx 240 --ny 240 --out field.txt

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import fields
from pathlib import Path

from .experiment import (ConfigError, PhaseError, RunConfig, ablate_enrichment, coerce_config_value,
                         fine_report, read_config_file, sweep, write_csv, write_plot_script)
from .fields import PATTERNS, RasterFormatError, generate_highcontrast, save_raster
from .saddle import NumericalError

EXIT_CONFIG, EXIT_NUMERICAL = 2, 3


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool":
            p.add_argument(flag, dest=f.name, default=None, metavar="BOOL",
                           help=f"true/false (default {f.default})")
        else:
            p.add_argument(flag, dest=f.name, default=None, help=f"(default {f.default})")
    p.add_argument("--config", help="flat key=value file; its entries override the flags")


def _config_from_args(args) -> RunConfig:
    values = {}
    for f in fields(RunConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            values[f.name] = coerce_config_value(f.name, raw)
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    try:
        return RunConfig(**values).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _write_rows(cfg: RunConfig, rows, axis: str | None = None) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(rows, out / "results.csv")
    write_plot_script(out / "plot.gp", "results.csv", axis or "n_loc", logx=(axis == "gamma"))
    return out / "results.csv"


def _print_rows(rows) -> None:
    for r in rows:
        print(f"n_loc={r.config.n_loc} ell={r.config.ell} gamma={r.gamma_used:g} "
              f"enrich={int(r.config.with_enrichment)}  error_v={r.error_v:.4e} "
              f"error_p={r.error_p:.4e} error_div={r.error_div:.4e}  "
              f"dofs fine/coarse={r.dofs_fine}/{r.dofs_coarse}"
              + (f"  beta={r.beta:.3e}" if r.beta == r.beta else ""))


def cmd_fine(args) -> int:
    cfg = _config_from_args(args)
    rep = fine_report(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fine.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(rep))
        w.writerow([repr(v) if isinstance(v, float) else v for v in rep.values()])
    for k, v in rep.items():
        print(f"{k} = {v}")
    return 0


def cmd_run(args) -> int:
    from .experiment import Experiment

    cfg = _config_from_args(args)
    row = Experiment(cfg).run()
    _print_rows([row])
    print(f"wrote {_write_rows(cfg, [row])}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    values = [v for v in args.values.split(",") if v.strip()]
    try:
        rows = sweep(cfg, args.axis, values)
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    _print_rows(rows)
    print(f"wrote {_write_rows(cfg, rows, args.axis)}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    rows = ablate_enrichment(cfg)
    _print_rows(rows)
    with_, without = rows
    print(f"error_v ratio (without/with) = {without.error_v / with_.error_v:.3g}; "
          f"beta ratio (with/without) = {with_.beta / max(without.beta, 1e-300):.3g}")
    print(f"wrote {_write_rows(cfg, rows)}")
    return 0


def cmd_infsup(args) -> int:
    from .experiment import Experiment

    cfg = _config_from_args(args).replace(infsup=True)
    row = Experiment(cfg).run(cfg, on_singular="lstsq")
    print(f"beta = {row.beta:.6e}  (velocity/pressure columns {row.rank_v}/{row.rank_p} effective)")
    _write_rows(cfg, [row])
    return 0


def cmd_gen_field(args) -> int:
    if args.nx < 1 or args.ny < 1:
        raise ConfigError("nx and ny must be positive")
    field = generate_highcontrast(args.nx, args.ny, args.pattern, args.contrast, args.seed)
    save_raster(field, args.out, comment=f"pattern={args.pattern} contrast={args.contrast} seed={args.seed}")
    print(f"wrote {args.out}: {args.nx}x{args.ny}, alpha0={field.alpha0:g}, alpha1={field.alpha1:g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mixed_msgfem", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (("fine", cmd_fine, "fine-scale RT0 reference solve only"),
                               ("run", cmd_run, "one multiscale run against the fine solution"),
                               ("sweep", cmd_sweep, "vary n_loc, ell or gamma"),
                               ("ablate", cmd_ablate, "with vs without enrichment"),
                               ("infsup", cmd_infsup, "estimate the coarse inf-sup constant")):
        p = sub.add_parser(name, help=helptext)
        _add_config_flags(p)
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=("n_loc", "ell", "gamma"))
            p.add_argument("--values", required=True, help="comma-separated list")
        p.set_defaults(func=fn)
    p = sub.add_parser("gen-field", help="write a synthetic high-contrast raster")
    p.add_argument("--pattern", choices=PATTERNS, default="channels")
    p.add_argument("--nx", type=int, default=240)
    p.add_argument("--ny", type=int, default=240)
    p.add_argument("--contrast", type=float, default=1e3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_field)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except PhaseError as exc:
        print(f"error: numerical failure in phase '{exc.phase}': {exc.cause}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NumericalError as exc:
        print(f"error: numerical failure in phase 'setup': {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, RasterFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
