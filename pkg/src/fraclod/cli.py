"""Command-line driver: fraclod {converge,decay,truncate,oracle,solve} [options]."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .coefficient import RasterError
from .errors import DomainError, SolverError, StructuralError
from .mesh import cylinder_mesh_for, refine
from .solvers import energy_error, solve_fine, solve_multiscale
from .special import extension_constant
from .studies import (ConfigError, StudyConfig, _cells, format_csv, forcing, parse_list,
                      parse_size, run_convergence_study, run_decay_study, run_oracle_check,
                      run_truncation_study)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

# config-file key -> (StudyConfig attribute, converter)
_KEYS = {
    "d": ("d", int),
    "s": ("s_list", lambda v: parse_list(v)),
    "H_list": ("H_list", lambda v: parse_list(v, parse_size)),
    "h": ("h", parse_size),
    "k": ("k", lambda v: v if str(v) == "full" else int(v)),
    "T": ("T", float),
    "coeff": ("coeff", str),
    "boundary_mode": ("boundary_mode", str),
    "f": ("f", str),
    "seed": ("seed", int),
    "k_max": ("k_max", int),
    "T_list": ("T_list", lambda v: parse_list(v)),
    "T_ref": ("T_ref", float),
    "h_list": ("h_list", lambda v: parse_list(v, parse_size)),
    "n_modes": ("n_modes", int),
    "compare_coarse": ("compare_coarse", lambda v: str(v).lower() in ("1", "true", "yes")),
    "cache_dir": ("cache_dir", str),
}


def read_config(path) -> dict:
    """key = value lines; '#' starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for num, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in _KEYS:
            raise ConfigError(f"{path}:{num}: unknown or malformed entry {line!r}")
        values[key] = val.strip()
    return values


def build_config(args) -> StudyConfig:
    raw = read_config(args.config) if args.config else {}
    for key in _KEYS:
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    kwargs = {}
    for key, val in raw.items():
        attr, conv = _KEYS[key]
        try:
            kwargs[attr] = conv(val)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {val!r}") from exc
    return StudyConfig(**kwargs).validate(check_H=args.command in ("converge", "decay", "solve"))


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fraclod",
        description="Multiscale solver studies for the heterogeneous fractional Laplacian.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("converge", "energy-error convergence in H"),
                        ("decay", "corrector localization error versus patch layers"),
                        ("truncate", "error versus truncation height T"),
                        ("oracle", "fine trace versus spectral solution"),
                        ("solve", "single multiscale solve with solution dump")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--out", help="CSV output path (default: stdout)")
        p.add_argument("--s", dest="s", help="comma-separated fractional orders")
        p.add_argument("--H-list", dest="H_list", help="coarse sizes, e.g. 2^-1,2^-2,1/8")
        p.add_argument("--h", dest="h", help="fine mesh size")
        p.add_argument("--k", dest="k", help="patch layers or 'full'")
        p.add_argument("--T", dest="T", help="truncation height")
        p.add_argument("--d", dest="d", help="dimension of Omega (1 or 2)")
        p.add_argument("--coeff", help="constant:<v> | raster:<path> | logrand:<contrast>[:<seed>]")
        p.add_argument("--boundary-mode", dest="boundary_mode", choices=("local", "global"))
        p.add_argument("--seed", help="seed for random coefficients")
        p.add_argument("--f", dest="f", help="right side: sine | zero")
        p.add_argument("--k-max", dest="k_max", help="largest layer in the decay study")
        p.add_argument("--T-list", dest="T_list", help="truncation heights")
        p.add_argument("--T-ref", dest="T_ref", help="reference height of the truncation study")
        p.add_argument("--h-list", dest="h_list", help="fine sizes of the oracle check")
        p.add_argument("--compare-coarse", dest="compare_coarse", action="store_const",
                       const="true", help="also report plain coarse Galerkin errors")
        p.add_argument("--cache-dir", dest="cache_dir", help="directory for corrector caches")
        if name == "solve":
            p.add_argument("--dump", help="write x, y, u_ms, u_h per fine node to this file")
    return parser


def _emit(text: str, out) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _solve(cfg: StudyConfig, dump) -> list[dict]:
    s, H = cfg.s_list[0], cfg.H_list[0]
    order = extension_constant(s)
    T = cfg.height(s)
    coarse = cylinder_mesh_for(cfg.d, H, T)
    fine = refine(coarse, _cells(cfg.h) // _cells(H))
    coeff = cfg.field().on_elements(fine)
    f = forcing(cfg.f, order, cfg.d)
    k = cfg.layers(coarse)
    ms = solve_multiscale(coarse, fine, k, coeff, order, f, cfg.boundary_mode, cache_dir=cfg.cache_dir)
    u_h = solve_fine(fine, coeff, order, f)
    err = energy_error(fine, u_h, ms.fine, order.a)
    if dump:
        np.savetxt(dump, np.column_stack([fine.vertices, ms.fine, u_h]),
                   header=" ".join([f"x{i + 1}" for i in range(cfg.d)] + ["y", "u_ms", "u_h"]))
    return [{"study": "solve", "s": s, "d": cfg.d, "H": H, "h": cfg.h, "k": k, "T": T,
             "boundary_mode": cfg.boundary_mode, "coeff": cfg.coeff, "value": err, "eoc": None}]


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        if args.command == "converge":
            rows = run_convergence_study(cfg)
        elif args.command == "decay":
            rows = run_decay_study(cfg)
        elif args.command == "truncate":
            rows = run_truncation_study(cfg)
        elif args.command == "oracle":
            report = run_oracle_check(cfg)
            print(report.text(), file=sys.stderr)
            rows = report.rows
        else:
            rows = _solve(cfg, args.dump)
        _emit(format_csv(rows), args.out)
    except (ConfigError, RasterError, DomainError, StructuralError) as exc:
        print(f"fraclod: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"fraclod: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
