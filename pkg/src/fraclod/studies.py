"""Convergence, decay, truncation and oracle studies producing CSV rows."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .coefficient import CoefficientField, parse_coefficient
from .correctors import full_layer, measure_decay
from .errors import DomainError
from .interpolation import BOUNDARY_MODES
from .mesh import cylinder_mesh_for, refine
from .solvers import (default_modes, energy_error, solve_coarse_galerkin, solve_fine,
                      solve_multiscale, solve_spectral_reference, trace_l2_error)
from .special import extension_constant

log = logging.getLogger(__name__)

CSV_HEADER = ["study", "s", "d", "H", "h", "k", "T", "boundary_mode", "coeff", "value", "eoc"]


class ConfigError(ValueError):
    """Invalid study configuration."""


def parse_size(text) -> float:
    """Mesh size from '0.125', '1/8' or '2^-3'."""
    t = str(text).strip()
    try:
        if "^" in t:
            base, _, expo = t.partition("^")
            return float(base) ** float(expo)
        return float(Fraction(t))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a mesh size: {text!r}") from None


def parse_list(text, conv=float) -> list:
    if isinstance(text, (list, tuple)):
        return [conv(t) for t in text]
    return [conv(t) for t in str(text).split(",") if t.strip()]


def default_T(s: float) -> float:
    """Truncation height used in the experiments: 1 for s <= 1/2, 1.5 above."""
    return 1.0 if s <= 0.5 else 1.5


def _cells(size: float, length: float = 1.0) -> int:
    n = length / size
    if size <= 0 or abs(n - round(n)) > 1e-9 or round(n) < 1:
        raise ConfigError(f"length {length} is not an integer multiple of mesh size {size}")
    return int(round(n))


@dataclass
class StudyConfig:
    d: int = 1
    s_list: list = field(default_factory=lambda: [0.5])
    H_list: list = field(default_factory=lambda: [0.5, 0.25, 0.125])
    h: float = 2.0**-6
    k: int | str = 2
    T: float | None = None
    coeff: str = "constant:1"
    boundary_mode: str = "local"
    f: str = "sine"
    seed: int = 0
    k_max: int = 5
    T_list: list = field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0])
    T_ref: float = 3.0
    h_list: list = field(default_factory=lambda: [2.0**-4, 2.0**-5, 2.0**-6])
    n_modes: int | None = None
    compare_coarse: bool = False
    cache_dir: str | None = None

    def validate(self, check_H: bool = True) -> "StudyConfig":
        if self.d not in (1, 2):
            raise ConfigError("d must be 1 or 2")
        if not self.s_list or any(not 0.0 < s < 1.0 for s in self.s_list):
            raise ConfigError("every s must lie in (0, 1)")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ConfigError(f"boundary_mode must be one of {BOUNDARY_MODES}")
        if self.f not in FORCINGS:
            raise ConfigError(f"f must be one of {sorted(FORCINGS)}")
        n_fine = _cells(self.h)
        for H in self.H_list if check_H else []:
            if _cells(H) == 0 or n_fine % _cells(H):
                raise ConfigError(f"H = {H} is not a multiple of h = {self.h}")
        if isinstance(self.k, str) and self.k != "full":
            raise ConfigError("k must be a non-negative integer or 'full'")
        if isinstance(self.k, int) and self.k < 0:
            raise ConfigError("k must be non-negative")
        if self.T is not None and self.T <= 0:
            raise ConfigError("T must be positive")
        if list(self.T_list) != sorted(self.T_list):
            raise ConfigError("T_list must be increasing")
        if self.T is not None and self.T < 1.0:
            log.warning("T = %g is below 1; truncation estimates assume T >= 1", self.T)
        return self

    def height(self, s: float) -> float:
        return default_T(s) if self.T is None else self.T

    def layers(self, coarse) -> int:
        return full_layer(coarse) if self.k == "full" else int(self.k)

    def field(self) -> CoefficientField:
        spec = self.coeff
        if spec.startswith("logrand:") and spec.count(":") == 1:
            spec = f"{spec}:{self.seed}"
        try:
            return parse_coefficient(spec, self.d, _cells(self.h))
        except (DomainError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def _sine(order, d):
    mu = d * math.pi**2
    return lambda x: mu**order.s * np.prod(np.sin(math.pi * x[:, :d]), axis=1)


def _zero(order, d):
    return lambda x: np.zeros(len(x))


FORCINGS = {"sine": _sine, "zero": _zero}


def forcing(name: str, order, d: int):
    """f with f = mu_1^s phi_1 for 'sine', so that the trace solution is prod sin(pi x_i)."""
    return FORCINGS[name](order, d)


def least_squares_eoc(H, err) -> float:
    """Slope of log(err) against log(H)."""
    H, err = np.asarray(H, dtype=float), np.asarray(err, dtype=float)
    return float(np.polyfit(np.log(H), np.log(err), 1)[0])


def loglinear_fit(x, y):
    """(slope, R^2) of a least-squares line through (x, log y)."""
    x, ly = np.asarray(x, dtype=float), np.log(np.asarray(y, dtype=float))
    coef = np.polyfit(x, ly, 1)
    pred = np.polyval(coef, x)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum((ly - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def _row(study, s, cfg, H, h, k, T, value, eoc=None) -> dict:
    return {"study": study, "s": s, "d": cfg.d, "H": H, "h": h, "k": k, "T": T,
            "boundary_mode": cfg.boundary_mode, "coeff": cfg.coeff, "value": value, "eoc": eoc}


def _with_eocs(rows):
    for prev, cur in zip(rows, rows[1:]):
        cur["eoc"] = math.log(prev["value"] / cur["value"]) / math.log(prev["H"] / cur["H"])
    return rows


def run_convergence_study(cfg: StudyConfig) -> list[dict]:
    """Energy error of the multiscale solution against the fine solution, per (s, H)."""
    cfg.validate()
    field_ = cfg.field()
    out = []
    for s in cfg.s_list:
        order = extension_constant(s)
        T = cfg.height(s)
        f = forcing(cfg.f, order, cfg.d)
        fine = cylinder_mesh_for(cfg.d, cfg.h, T)
        coeff = field_.on_elements(fine)
        u_h = solve_fine(fine, coeff, order, f)
        ms_rows, cg_rows = [], []
        for H in cfg.H_list:
            coarse = cylinder_mesh_for(cfg.d, H, T)
            fm = refine(coarse, _cells(cfg.h) // _cells(H))
            if not np.array_equal(fm.vertices, fine.vertices):
                raise ConfigError("refined coarse mesh does not reproduce the fine mesh")
            k = cfg.layers(coarse)
            ms = solve_multiscale(coarse, fm, k, coeff, order, f, cfg.boundary_mode,
                                  cache_dir=cfg.cache_dir)
            err = energy_error(fm, u_h, ms.fine, order.a)
            log.info("s=%g H=%g k=%d error=%.4e", s, H, k, err)
            ms_rows.append(_row("converge", s, cfg, H, cfg.h, k, T, err))
            if cfg.compare_coarse:
                cg = solve_coarse_galerkin(coarse, fm, coeff, order, f)
                cg_rows.append(_row("converge_coarse", s, cfg, H, cfg.h, 0, T,
                                    energy_error(fm, u_h, cg.fine, order.a)))
        out += _with_eocs(ms_rows) + _with_eocs(cg_rows)
    return out


def run_decay_study(cfg: StudyConfig) -> list[dict]:
    """e_k for k = 1..k_max at the coarse trace node nearest the center of Omega."""
    cfg.validate()
    field_ = cfg.field()
    out = []
    for s in cfg.s_list:
        order = extension_constant(s)
        T = cfg.height(s)
        for H in cfg.H_list:
            coarse = cylinder_mesh_for(cfg.d, H, T)
            fine = refine(coarse, _cells(cfg.h) // _cells(H))
            v = center_trace_node(coarse)
            rec = measure_decay(coarse, fine, v, cfg.k_max, order, field_.on_elements(fine),
                                cfg.boundary_mode)
            for k, e in zip(rec.layers, rec.energies):
                out.append(_row("decay", s, cfg, H, cfg.h, int(k), T, float(e), rec.theta))
            out.append(_row("decay_theta", s, cfg, H, cfg.h, cfg.k_max, T, rec.theta, rec.r_squared))
    return out


def center_trace_node(mesh) -> int:
    nodes = mesh.classification.trace_nodes
    x = mesh.vertices[nodes, : mesh.d]
    return int(nodes[np.argmin(np.sum((x - 0.5) ** 2, axis=1))])


def _embed(short, tall) -> slice:
    """Tall-mesh node indices of the short mesh (same x grid and spacing, lower T)."""
    if short.n_x != tall.n_x or short.n_y > tall.n_y:
        raise ConfigError("truncation meshes must share the x grid")
    return slice(0, short.n_vertices)


def run_truncation_study(cfg: StudyConfig) -> list[dict]:
    """Energy distance between the solution at each T (extended by zero) and at T_ref."""
    cfg.validate(check_H=False)
    field_ = cfg.field()
    if cfg.T_list and cfg.T_ref <= max(cfg.T_list):
        raise ConfigError("T_ref must exceed every truncation height")
    out = []
    for s in cfg.s_list:
        order = extension_constant(s)
        f = forcing(cfg.f, order, cfg.d)
        ref_mesh = cylinder_mesh_for(cfg.d, cfg.h, cfg.T_ref)
        u_ref = solve_fine(ref_mesh, field_.on_elements(ref_mesh), order, f)
        errs = []
        for T in cfg.T_list:
            mesh = cylinder_mesh_for(cfg.d, cfg.h, T)
            u = solve_fine(mesh, field_.on_elements(mesh), order, f)
            ext = np.zeros(ref_mesh.n_vertices)
            ext[_embed(mesh, ref_mesh)] = u
            err = energy_error(ref_mesh, ext, u_ref, order.a)
            errs.append(err)
            out.append(_row("truncate", s, cfg, cfg.h, cfg.h, 0, T, err))
        slope, r2 = loglinear_fit(cfg.T_list, errs)
        out.append(_row("truncate_rate", s, cfg, cfg.h, cfg.h, 0, cfg.T_ref, slope, r2))
    return out


@dataclass
class OracleReport:
    rows: list
    c_s: dict
    monotone: dict

    def text(self) -> str:
        lines = []
        for s in self.c_s:
            vals = [r["value"] for r in self.rows if r["s"] == s]
            status = "PASS" if self.monotone[s] else "FAIL"
            lines.append(f"s={s:g} c_s={self.c_s[s]:.15g} discrepancies="
                         + ",".join(f"{v:.4e}" for v in vals) + f" monotone={status}")
        return "\n".join(lines)


def run_oracle_check(cfg: StudyConfig) -> OracleReport:
    """Relative L2(Omega) distance of the fine trace to the spectral solution, per h."""
    cfg.validate(check_H=False)
    if not cfg.coeff.startswith("constant"):
        raise ConfigError("the spectral oracle requires a constant coefficient")
    A = cfg.field().alpha
    rows, c_s, mono = [], {}, {}
    for s in cfg.s_list:
        order = extension_constant(s)
        f = forcing(cfg.f, order, cfg.d)
        ref = solve_spectral_reference(order, f, cfg.n_modes or default_modes(cfg.d), cfg.d, A)
        T = cfg.T if cfg.T is not None else cfg.T_ref
        vals = []
        for h in cfg.h_list:
            mesh = cylinder_mesh_for(cfg.d, h, T)
            u = solve_fine(mesh, np.full(mesh.n_elements, A), order, f)
            err = trace_l2_error(mesh, u, ref.trace)
            vals.append(err)
            rows.append(_row("oracle", s, cfg, h, h, 0, T, err))
        c_s[s] = order.c_s
        mono[s] = all(b < a for a, b in zip(vals, vals[1:])) or max(vals) == 0.0
    return OracleReport(rows=rows, c_s=c_s, monotone=mono)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CSV_HEADER])
    return buf.getvalue()


def overrides(cfg: StudyConfig, **kw) -> StudyConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
