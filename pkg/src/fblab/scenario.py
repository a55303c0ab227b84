"""Scenario configuration, orchestration, and reporting.

A scenario JSON names an operator, a grid spacing, a solve mode, a boundary
datum from a small closed-form grammar, and a set of analysis toggles.  A
run executes the solve, then the enabled analyses, writes field dumps and
CSV artifacts into its output directory, and emits a single report JSON.

Datum grammar: sums of signed terms, each term a '*' product of factors
    number | x1[^p] | x2[^p] | abs(expr)[^p] | pp(expr)[^p] | (expr)[^p]
with nonnegative integer exponents; pp is the positive part.  Example:
``0.5*x2^2 + 0.4*x1*x2^2`` or ``0.5*pp(x2 - 0.25)^2``.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .blowup import analyze_blowup
from .boundary import (BoundaryCurve, cone_clearance, complement_measure,
                       export_curve_csv, export_modulus_csv, extract_gamma,
                       extract_gamma_i, gamma_i_clearance, modulus_table)
from .grid import HalfDiskGrid, ScalarField, dump_field, export_csv
from .operators import operator_from_dict
from .regularity import bmo_profile, c11_sup, dyadic_profile
from .solver import (InconsistentDatumError, SolverConfig, solve_dirichlet,
                     solve_nosign, solve_obstacle)

_MODES = ("dirichlet", "obstacle", "nosign")


class ScenarioError(ValueError):
    """Validation failure; carries the offending field path."""

    def __init__(self, field_path: str, message: str):
        self.field = field_path
        super().__init__(f"{field_path}: {message}")


# ---------------------------------------------------------------------------
# datum grammar
# ---------------------------------------------------------------------------

def _split_top(s: str, seps: str):
    """Split s at paren depth 0 on any char in seps, keeping the separators."""
    parts, buf, depth = [], "", 0
    for ch in s:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ValueError("unbalanced ')'")
        if depth == 0 and ch in seps:
            parts.append(buf)
            parts.append(ch)
            buf = ""
        else:
            buf += ch
    if depth != 0:
        raise ValueError("unbalanced '('")
    parts.append(buf)
    return parts


def _parse_factor(tok: str) -> Callable:
    tok = tok.strip()
    if not tok:
        raise ValueError("empty factor")
    base, power = tok, 1
    depth = 0
    for idx, ch in enumerate(tok):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "^" and depth == 0:
            base, exp = tok[:idx].strip(), tok[idx + 1:].strip()
            if not exp.isdigit():
                raise ValueError(f"exponent must be a nonnegative integer, got {exp!r}")
            power = int(exp)
            break
    if base == "x1":
        return lambda x1, x2: np.asarray(x1, float) ** power
    if base == "x2":
        return lambda x1, x2: np.asarray(x2, float) ** power
    for prefix, wrap in (("pp(", lambda v: np.maximum(v, 0.0)),
                         ("abs(", np.abs),
                         ("(", lambda v: v)):
        if base.startswith(prefix) and base.endswith(")"):
            inner = _parse_expr(base[len(prefix):-1])
            return lambda x1, x2, _i=inner, _w=wrap: _w(_i(x1, x2)) ** power
    try:
        c = float(base)
    except ValueError:
        raise ValueError(f"unrecognized factor {tok!r}") from None
    return lambda x1, x2, _c=c ** power: np.full_like(np.asarray(x1, float), _c)


def _parse_term(term: str) -> Callable:
    factors = []
    parts = _split_top(term, "*")
    for k in range(0, len(parts), 2):
        factors.append(_parse_factor(parts[k]))
    def term_fn(x1, x2):
        out = np.ones_like(np.asarray(x1, float))
        for f in factors:
            out = out * f(x1, x2)
        return out
    return term_fn


def _parse_expr(expr: str) -> Callable:
    parts = _split_top(expr, "+-")
    terms = []  # (sign, fn)
    sign = 1.0
    pending = parts[0]
    k = 1
    while True:
        if pending.strip():
            terms.append((sign, _parse_term(pending)))
            sign = 1.0
        elif not terms and sign == 1.0 and k <= len(parts):
            pass  # leading sign
        if k >= len(parts):
            break
        op, pending = parts[k], parts[k + 1]
        if not pending.strip():
            raise ValueError(f"dangling operator {op!r}")
        sign = sign * (-1.0 if op == "-" else 1.0)
        k += 2
    if not terms:
        raise ValueError("empty expression")
    def expr_fn(x1, x2):
        out = np.zeros_like(np.asarray(x1, float))
        for s, fn in terms:
            out = out + s * fn(x1, x2)
        return out
    return expr_fn


def parse_datum(text: str) -> Callable:
    """Compile a datum expression to a vectorized callable of (x1, x2)."""
    if not isinstance(text, str) or not text.strip():
        raise ValueError("datum must be a nonempty expression string")
    fn = _parse_expr(text.replace(" ", ""))
    probe = fn(np.array([0.0, 0.5]), np.array([0.0, 0.5]))  # smoke evaluation
    if not np.all(np.isfinite(probe)):
        raise ValueError("datum evaluates to a non-finite value")
    return fn


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    operator: dict
    h: float
    mode: str
    datum: str
    rhs: float = 1.0
    solver: dict = field(default_factory=dict)
    analyses: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if not isinstance(d, dict):
            raise ScenarioError("$", "scenario must be a JSON object")
        for key in ("name", "operator", "grid", "mode", "datum"):
            if key not in d:
                raise ScenarioError(key, "missing required field")
        if not isinstance(d["name"], str) or not d["name"]:
            raise ScenarioError("name", "must be a nonempty string")
        grid = d["grid"]
        if not isinstance(grid, dict) or "h" not in grid:
            raise ScenarioError("grid.h", "missing grid spacing")
        box = grid.get("box", [-1.0, 1.0, 0.0, 1.0])
        if list(box) != [-1.0, 1.0, 0.0, 1.0]:
            raise ScenarioError("grid.box", "only the box [-1,1]x[0,1] is supported")
        mode = d["mode"]
        if mode not in _MODES:
            raise ScenarioError("mode", f"must be one of {_MODES}")
        try:
            operator_from_dict(d["operator"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ScenarioError("operator", str(exc)) from None
        try:
            parse_datum(d["datum"])
        except ValueError as exc:
            raise ScenarioError("datum", str(exc)) from None
        analyses = d.get("analyses", {})
        if not isinstance(analyses, dict):
            raise ScenarioError("analyses", "must be an object")
        for key in analyses:
            if key not in ("blowup", "boundary", "bmo", "c11"):
                raise ScenarioError(f"analyses.{key}", "unknown analysis")
        if _enabled(analyses.get("boundary")) and mode == "dirichlet":
            raise ScenarioError("analyses.boundary",
                                "boundary extraction needs an active set "
                                "(obstacle or nosign mode)")
        sc = cls(name=d["name"], operator=d["operator"], h=float(grid["h"]),
                 mode=mode, datum=d["datum"], rhs=float(d.get("rhs", 1.0)),
                 solver=d.get("solver", {}), analyses=analyses, raw=d)
        try:
            HalfDiskGrid(sc.h)
        except ValueError as exc:
            raise ScenarioError("grid.h", str(exc)) from None
        return sc

    @classmethod
    def from_file(cls, path) -> "Scenario":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ScenarioError("$", f"cannot read {path}: {exc}") from None
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError("$", f"invalid JSON at line {exc.lineno}, "
                                     f"column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(d)


def _enabled(cfg) -> bool:
    if cfg is None or cfg is False:
        return False
    if cfg is True:
        return True
    if isinstance(cfg, dict):
        return bool(cfg.get("enabled", True))
    raise ScenarioError("analyses", "toggle must be bool or object")


def _cfg(cfg) -> dict:
    return cfg if isinstance(cfg, dict) else {}


def _solver_config(sc: Scenario) -> SolverConfig:
    allowed = ("K", "max_outer_iters", "newton_damping", "residual_tol",
               "active_set_tol_u", "active_set_tol_grad",
               "structure_samples", "structure_seed")
    kw = {}
    for key, val in sc.solver.items():
        if key not in allowed:
            raise ScenarioError(f"solver.{key}", "unknown solver option")
        kw[key] = val
    kw.setdefault("mode", sc.mode)
    return SolverConfig(**kw)


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def run_scenario(sc: Scenario, out_dir, seed: int = 0,
                 normalize: bool = False) -> dict:
    """Execute a scenario; returns the report dict (also written to disk).

    The report carries ``exit_code``: 0 converged and unflagged, 2 converged
    but flagged (indeterminate classification, refused blow-up gate, missing
    contact), 1 solver failure.
    """
    t_start = time.perf_counter()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = HalfDiskGrid(sc.h)
    op = operator_from_dict(sc.operator)
    datum = parse_datum(sc.datum)
    cfg = _solver_config(sc)
    cfg.structure_seed = int(seed)

    timings = {}
    flags = []
    artifacts = []
    analyses_out = {}
    active = None

    t0 = time.perf_counter()
    if sc.mode == "dirichlet":
        u, solve_report = solve_dirichlet(op, sc.rhs, datum, grid, cfg)
    elif sc.mode == "obstacle":
        u, active, solve_report = solve_obstacle(op, datum, grid, cfg)
    else:
        u, active, solve_report = solve_nosign(op, datum, grid, cfg)
    timings["solve"] = time.perf_counter() - t0

    dump_field(u, out / "u.field")
    export_csv(u, out / "u.csv")
    artifacts += ["u.field", "u.csv"]

    if _enabled(sc.analyses.get("blowup")):
        t0 = time.perf_counter()
        try:
            analyses_out["blowup"] = analyze_blowup(u, op=op)
            if analyses_out["blowup"]["classification"] == "indeterminate":
                flags.append("blowup classification is indeterminate")
        except ValueError as exc:
            analyses_out["blowup"] = {"skipped": str(exc)}
            flags.append(f"blowup skipped: {exc}")
        timings["blowup"] = time.perf_counter() - t0

    if _enabled(sc.analyses.get("boundary")):
        t0 = time.perf_counter()
        bcfg = _cfg(sc.analyses.get("boundary"))
        radii = [float(r) for r in bcfg.get("radii", (0.4, 0.2, 0.1))]
        gamma = extract_gamma(active)
        gamma_i = extract_gamma_i(u, cfg.tol_u(grid.h))
        table = modulus_table(gamma, radii)
        cone = bcfg.get("cone", {"epsilon": 0.5, "rho": 0.1})
        ok, witnesses = cone_clearance(gamma, float(cone["epsilon"]), float(cone["rho"]))
        comp_area, comp_empty = complement_measure(active, max(radii))
        export_curve_csv(gamma, out / "gamma.csv")
        export_curve_csv(gamma_i, out / "gamma_i.csv")
        export_modulus_csv(table, out / "modulus.csv")
        artifacts += ["gamma.csv", "gamma_i.csv", "modulus.csv"]
        if gamma.is_empty:
            contact_distance, contact_vertex = None, None
        else:
            k = int(np.argmin(np.linalg.norm(gamma.points, axis=1)))
            contact_distance = float(np.linalg.norm(gamma.points[k]))
            contact_vertex = [float(gamma.points[k, 0]), float(gamma.points[k, 1])]
        entry = {
            "gamma_vertices": int(gamma.points.shape[0]),
            "gamma_i_vertices": int(gamma_i.points.shape[0]),
            "gamma_i_clearance": gamma_i_clearance(gamma_i),
            "modulus": [list(row) for row in table.rows],
            "modulus_r0": table.r0,
            "cone_clearance": {"epsilon": float(cone["epsilon"]),
                               "rho": float(cone["rho"]), "clear": bool(ok),
                               "violations": int(witnesses.shape[0])},
            "complement_area": comp_area,
            "complement_interior_empty": comp_empty,
            "contact_distance": contact_distance,
            "contact_vertex": contact_vertex,
        }
        require = bcfg.get("require_contact")
        if require is not None:
            limit = float(require)
            if contact_distance is None or contact_distance > limit:
                flags.append(
                    "no free-boundary contact: nearest Gamma vertex at "
                    f"{contact_distance} exceeds {limit}" if contact_distance
                    is not None else "no free-boundary contact: Gamma is empty")
        analyses_out["boundary"] = entry
        timings["boundary"] = time.perf_counter() - t0

    if _enabled(sc.analyses.get("bmo")):
        t0 = time.perf_counter()
        mcfg = _cfg(sc.analyses.get("bmo"))
        target = float(mcfg.get("target", sc.rhs if sc.mode == "dirichlet" else 1.0))
        center = mcfg.get("center", (0.0, 0.0))
        dy = dyadic_profile(u, center, op, target, rho=float(mcfg.get("rho", 0.5)))
        bm = bmo_profile(u, center, op, target, rho=float(mcfg.get("rho", 0.5)))
        analyses_out["bmo"] = {
            "radii": list(dy.radii),
            "sup_misfit": list(dy.sup_misfit),
            "normalized_misfit": list(dy.normalized_misfit),
            "increments": list(dy.increments),
            "uniform_bound_ok": dy.uniform_bound_ok,
            "bmo_radii": list(bm.radii),
            "bmo_values": list(bm.values),
        }
        timings["bmo"] = time.perf_counter() - t0

    if _enabled(sc.analyses.get("c11")):
        t0 = time.perf_counter()
        ccfg = _cfg(sc.analyses.get("c11"))
        radius = float(ccfg.get("radius", 0.5))
        norm = ccfg.get("norm", "spectral")
        analyses_out["c11"] = {"radius": radius, "norm": norm,
                               "sup": c11_sup(u, radius, matrix_norm=norm)}
        timings["c11"] = time.perf_counter() - t0

    timings["total"] = time.perf_counter() - t_start
    if not solve_report.converged:
        exit_code = 1
    elif flags:
        exit_code = 2
    else:
        exit_code = 0
    report = {
        "tool_version": __version__,
        "scenario": sc.raw,
        "seed": int(seed),
        "solver": solve_report.to_dict(),
        "analyses": analyses_out,
        "flags": flags,
        "artifacts": artifacts,
        "timings": {k: None for k in timings} if normalize else timings,
        "exit_code": exit_code,
    }
    (out / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return report


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _numeric_leaves(d, prefix=""):
    out = {}
    if isinstance(d, dict):
        for k, v in d.items():
            out.update(_numeric_leaves(v, f"{prefix}.{k}" if prefix else str(k)))
    elif isinstance(d, (list, tuple)):
        for k, v in enumerate(d):
            out.update(_numeric_leaves(v, f"{prefix}[{k}]"))
    elif isinstance(d, bool):
        out[prefix] = float(d)
    elif isinstance(d, (int, float)) and d is not None:
        out[prefix] = float(d)
    return out


def compare_reports(rep_a: dict, rep_b: dict) -> dict:
    """Per-metric numeric deltas between two reports of the same scenario.

    Identical reports give an empty delta table; timings are ignored.
    """
    name_a = rep_a.get("scenario", {}).get("name")
    name_b = rep_b.get("scenario", {}).get("name")
    if name_a != name_b:
        raise ValueError(f"scenario names differ: {name_a!r} vs {name_b!r}")
    la = _numeric_leaves({k: v for k, v in rep_a.items() if k != "timings"})
    lb = _numeric_leaves({k: v for k, v in rep_b.items() if k != "timings"})
    deltas = {}
    for key in sorted(set(la) & set(lb)):
        d = lb[key] - la[key]
        if d != 0.0:
            deltas[key] = {"a": la[key], "b": lb[key], "delta": d}
    return {
        "scenario": name_a,
        "deltas": deltas,
        "only_in_a": sorted(set(la) - set(lb)),
        "only_in_b": sorted(set(lb) - set(la)),
    }
