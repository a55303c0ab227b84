"""Finite-difference solvers for the model problem on the half disk.

Three modes:

* ``dirichlet``  F(D2 u) = f in the interior, u = g on flat and arc boundary.
* ``obstacle``   classical complementarity min(1 - F(D2 u), u) = 0, u >= 0,
                 u = 0 on the flat boundary, u = g >= 0 on the arc.
* ``nosign``     active-set fixed point for the no-sign problem:
                 Omega_{k+1} = {|u_k| > tol_u} or {|grad u_k| > tol_grad},
                 F(D2 u) = 1 on Omega, u pinned to 0 outside.

Nonlinear solves use policy/Newton iteration: the equation is re-assembled
with the coefficient matrices from ``linearize`` at the current iterate
(Howard's method for the extremal and bellman kinds).  Linear subproblems
are solved with a sparse direct factorization, which is deterministic and
exact to rounding at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .grid import HalfDiskGrid, ScalarField, gradient, hessian, interpolate_many
from .operators import EllipticOperator, check_structure, evaluate_on_arrays, linearize_on_arrays

Datum = Union[float, Callable]


@dataclass
class SolverConfig:
    K: float = 10.0  # diagnostic bound on |D2 u| off the active set
    max_outer_iters: int = 60
    newton_damping: float = 1.0
    residual_tol: float = 1e-9
    active_set_tol_u: Optional[float] = None  # default h^2
    active_set_tol_grad: Optional[float] = None  # default h
    mode: str = "obstacle"
    structure_samples: int = 128
    structure_seed: int = 0

    def __post_init__(self):
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if not (0.0 < self.newton_damping <= 1.0):
            raise ValueError("newton_damping must lie in (0, 1]")
        for t in (self.active_set_tol_u, self.active_set_tol_grad):
            if t is not None and t <= 0:
                raise ValueError("active-set tolerances must be positive")

    def tol_u(self, h: float) -> float:
        return self.active_set_tol_u if self.active_set_tol_u is not None else h * h

    def tol_grad(self, h: float) -> float:
        return self.active_set_tol_grad if self.active_set_tol_grad is not None else h


@dataclass(frozen=True)
class ActiveSet:
    grid: HalfDiskGrid
    mask: np.ndarray  # bool (nx, ny), subset of interior nodes

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if np.any(m & ~self.grid.interior):
            raise ValueError("active set must be a subset of interior nodes")
        object.__setattr__(self, "mask", m)

    @property
    def count(self) -> int:
        return int(self.mask.sum())


@dataclass
class SolveReport:
    mode: str
    converged: bool
    outer_iterations: int
    pde_residual: float
    complementarity_residual: float = 0.0
    offomega_hessian_max: float = 0.0
    K: float = 0.0
    residual_tol: float = 0.0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "converged": self.converged,
            "outer_iterations": self.outer_iterations,
            "pde_residual": self.pde_residual,
            "complementarity_residual": self.complementarity_residual,
            "offomega_hessian_max": self.offomega_hessian_max,
            "K": self.K,
            "residual_tol": self.residual_tol,
            "notes": list(self.notes),
        }


class InconsistentDatumError(ValueError):
    """Active set emptied out although the boundary datum is nonzero."""


def _datum_array(grid: HalfDiskGrid, g: Datum, where: np.ndarray) -> np.ndarray:
    out = np.zeros((grid.nx, grid.ny))
    if callable(g):
        vals = np.broadcast_to(np.asarray(g(grid.X1, grid.X2), dtype=float), out.shape)
        out[where] = vals[where]
    else:
        out[where] = float(g)
    return out


def _rhs_array(grid: HalfDiskGrid, f) -> np.ndarray:
    if isinstance(f, ScalarField):
        return np.where(grid.valid, f.values, 0.0)
    if callable(f):
        vals = f(grid.X1, grid.X2)
        return np.where(grid.valid, vals, 0.0)
    return np.full((grid.nx, grid.ny), float(f))


def _hessian_arrays(grid: HalfDiskGrid, values: np.ndarray):
    vals = np.ascontiguousarray(np.where(grid.valid, values, 0.0))
    return _kernels.hessian_components(vals, np.ascontiguousarray(grid.interior), grid.h)


def _x_factor_array(op: EllipticOperator, grid: HalfDiskGrid) -> np.ndarray:
    if op.x_dep is None or op.x_dep.scale == 0.0:
        return np.ones((grid.nx, grid.ny))
    r = grid.radius()
    return 1.0 + op.x_dep.scale * r ** op.x_dep.alphabar


def _assemble_and_solve(grid, unknown, fixed_vals, lxx, lyy, lxy, rhs):
    """Solve sum_ij L_ij d_ij u = rhs on the unknown nodes, Dirichlet elsewhere."""
    nx, ny = grid.nx, grid.ny
    h2 = grid.h * grid.h
    ii, jj = np.nonzero(unknown)
    n_unknown = ii.size
    if n_unknown == 0:
        return fixed_vals.copy()
    index = -np.ones((nx, ny), dtype=np.int64)
    index[ii, jj] = np.arange(n_unknown)

    a_xx = lxx[ii, jj] / h2
    a_yy = lyy[ii, jj] / h2
    a_xy = lxy[ii, jj] / (2.0 * h2)
    b = rhs[ii, jj].astype(float).copy()

    stencil = [
        (0, 0, -2.0 * (a_xx + a_yy)),
        (1, 0, a_xx), (-1, 0, a_xx),
        (0, 1, a_yy), (0, -1, a_yy),
        (1, 1, a_xy), (-1, -1, a_xy),
        (1, -1, -a_xy), (-1, 1, -a_xy),
    ]
    rows, cols, data = [], [], []
    row_ids = np.arange(n_unknown)
    for di, dj, coeff in stencil:
        ni, nj = ii + di, jj + dj
        nbr = index[ni, nj]
        free = nbr >= 0
        rows.append(row_ids[free])
        cols.append(nbr[free])
        data.append(np.broadcast_to(coeff, (n_unknown,))[free])
        pinned = ~free
        if np.any(pinned):
            np.subtract.at(
                b, row_ids[pinned],
                np.broadcast_to(coeff, (n_unknown,))[pinned] * fixed_vals[ni[pinned], nj[pinned]],
            )
    A = sp.csc_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_unknown, n_unknown),
    )
    sol = spla.spsolve(A, b)
    out = fixed_vals.copy()
    out[ii, jj] = sol
    return out


def _pde_solve(op, grid, unknown, fixed_vals, f_arr, cfg, u0=None):
    """Policy/Newton iteration for F(D2 u) = f on the unknown nodes."""
    xfac = _x_factor_array(op, grid)
    u = fixed_vals.copy() if u0 is None else u0.copy()
    if int(unknown.sum()) == 0:
        return fixed_vals.copy(), 0.0, 0, True
    damping = cfg.newton_damping
    best_res = np.inf
    for it in range(1, cfg.max_outer_iters + 1):
        hxx, hyy, hxy = _hessian_arrays(grid, u)
        hxx0 = np.where(unknown, np.nan_to_num(hxx), 0.0)
        hyy0 = np.where(unknown, np.nan_to_num(hyy), 0.0)
        hxy0 = np.where(unknown, np.nan_to_num(hxy), 0.0)
        lxx, lyy, lxy = linearize_on_arrays(op, hxx0, hyy0, hxy0)
        lxx, lyy, lxy = lxx * xfac, lyy * xfac, lxy * xfac
        u_new = _assemble_and_solve(grid, unknown, fixed_vals, lxx, lyy, lxy, f_arr)
        if damping < 1.0:
            u_new = u + damping * (u_new - u)
        hxx, hyy, hxy = _hessian_arrays(grid, u_new)
        res_field = evaluate_on_arrays(op, hxx, hyy, hxy, grid.X1, grid.X2) - f_arr
        res = float(np.nanmax(np.abs(np.where(unknown, res_field, 0.0))))
        u = u_new
        if res <= cfg.residual_tol:
            return u, res, it, True
        if res > 0.99 * best_res:
            damping = max(0.25, 0.5 * damping)  # stalled: damp the policy update
        best_res = min(best_res, res)
    return u, res, cfg.max_outer_iters, False


def _require_elliptic(op: EllipticOperator, cfg: SolverConfig) -> None:
    rep = check_structure(op, cfg.structure_samples, cfg.structure_seed)
    if not rep.checks["pucci_sandwich"]["passed"]:
        raise ValueError("operator violates the uniform ellipticity sandwich; refusing to solve")
    if not rep.checks["zero_at_zero"]["passed"]:
        raise ValueError("operator does not vanish on the zero matrix; refusing to solve")


def _offomega_hessian_max(grid, values, omega):
    """Max spectral norm of D2 u over interior nodes whose full stencil avoids omega."""
    hxx, hyy, hxy = _hessian_arrays(grid, values)
    padded = np.zeros((grid.nx + 2, grid.ny + 2), dtype=bool)
    padded[1:-1, 1:-1] = omega
    near = np.zeros((grid.nx, grid.ny), dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            near |= padded[1 + di:grid.nx + 1 + di, 1 + dj:grid.ny + 1 + dj]
    sel = grid.interior & ~near
    if not np.any(sel):
        return 0.0
    norms = _kernels.sym2_spectral_norm(
        np.nan_to_num(hxx), np.nan_to_num(hyy), np.nan_to_num(hxy))
    return float(np.max(norms[sel]))


def solve_dirichlet(op: EllipticOperator, f, g: Datum, grid: HalfDiskGrid,
                    cfg: Optional[SolverConfig] = None):
    """Solve F(D2 u) = f with u = g on both boundary pieces."""
    cfg = cfg or SolverConfig(mode="dirichlet")
    _require_elliptic(op, cfg)
    fixed = _datum_array(grid, g, grid.flat | grid.arc)
    fixed[~grid.valid] = 0.0
    f_arr = _rhs_array(grid, f)
    u, res, iters, ok = _pde_solve(op, grid, grid.interior, fixed, f_arr, cfg)
    field = ScalarField(grid, np.where(grid.valid, u, np.nan))
    report = SolveReport(mode="dirichlet", converged=ok, outer_iterations=iters,
                         pde_residual=res, residual_tol=cfg.residual_tol, K=cfg.K)
    return field, report


def solve_obstacle(op: EllipticOperator, g: Datum, grid: HalfDiskGrid,
                   cfg: Optional[SolverConfig] = None):
    """Classical obstacle mode: min(1 - F(D2 u), u) = 0 with u >= 0.

    Primal active-set iteration: nodes with u - q <= 0 (q the PDE slack
    1 - F(D2 u)) are pinned to zero, the PDE is re-solved on the rest.
    """
    cfg = cfg or SolverConfig(mode="obstacle")
    _require_elliptic(op, cfg)
    arc_vals = _datum_array(grid, g, grid.arc)
    if float(arc_vals[grid.arc].min(initial=0.0)) < -1e-12:
        raise ValueError("obstacle mode requires a nonnegative arc datum")
    fixed_bc = arc_vals
    f_arr = np.ones((grid.nx, grid.ny))
    omega = grid.interior.copy()
    u = fixed_bc.copy()
    notes = []
    comp_res = np.inf
    pde_res = np.inf
    for it in range(1, cfg.max_outer_iters + 1):
        fixed = fixed_bc.copy()
        fixed[grid.interior & ~omega] = 0.0
        u, pde_res, _, _ = _pde_solve(op, grid, omega, fixed, f_arr, cfg, u0=u)
        hxx, hyy, hxy = _hessian_arrays(grid, u)
        q = 1.0 - evaluate_on_arrays(op, hxx, hyy, hxy, grid.X1, grid.X2)
        q = np.where(grid.interior, q, np.inf)
        comp = np.where(grid.interior, np.minimum(np.abs(q), np.abs(u)), 0.0)
        comp_res = float(np.nanmax(comp))
        new_omega = grid.interior & ((u - np.where(np.isfinite(q), q, 0.0)) > 0.0)
        stable = bool(np.array_equal(new_omega, omega))
        if stable and comp_res <= cfg.residual_tol and pde_res <= cfg.residual_tol:
            break
        omega = new_omega
    else:
        it = cfg.max_outer_iters
    converged = comp_res <= cfg.residual_tol and pde_res <= cfg.residual_tol
    min_u = float(np.min(np.where(grid.interior, u, 0.0)))
    if min_u < -cfg.residual_tol:
        converged = False
        notes.append(f"negative values down to {min_u}")
    tol_u = cfg.tol_u(grid.h)
    active = ActiveSet(grid, grid.interior & (u > tol_u))
    off_max = _offomega_hessian_max(grid, u, active.mask)
    field = ScalarField(grid, np.where(grid.valid, u, np.nan))
    report = SolveReport(mode="obstacle", converged=converged, outer_iterations=it,
                         pde_residual=pde_res, complementarity_residual=comp_res,
                         offomega_hessian_max=off_max, K=cfg.K,
                         residual_tol=cfg.residual_tol, notes=notes)
    return field, active, report


def solve_nosign(op: EllipticOperator, g: Datum, grid: HalfDiskGrid,
                 cfg: Optional[SolverConfig] = None):
    """No-sign mode: fixed-point iteration on Omega = {|u| > tol_u} or {|grad u| > tol_grad}."""
    cfg = cfg or SolverConfig(mode="nosign")
    _require_elliptic(op, cfg)
    arc_vals = _datum_array(grid, g, grid.arc)
    datum_scale = float(np.max(np.abs(arc_vals[grid.arc]), initial=0.0))
    f_arr = np.ones((grid.nx, grid.ny))
    tol_u = cfg.tol_u(grid.h)
    tol_g = cfg.tol_grad(grid.h)
    omega = grid.interior.copy()
    u = arc_vals.copy()
    history = []
    notes = []
    pde_res = np.inf
    converged = False
    for it in range(1, cfg.max_outer_iters + 1):
        fixed = arc_vals.copy()
        fixed[grid.interior & ~omega] = 0.0
        u, pde_res, _, _ = _pde_solve(op, grid, omega, fixed, f_arr, cfg, u0=u)
        gx, gy = _kernels.gradient_components(
            np.ascontiguousarray(np.where(grid.valid, u, 0.0)),
            np.ascontiguousarray(grid.valid), grid.h)
        gmag = np.hypot(np.nan_to_num(gx), np.nan_to_num(gy))
        new_omega = grid.interior & ((np.abs(u) > tol_u) | (gmag > tol_g))
        if not np.any(new_omega) and datum_scale > tol_u:
            raise InconsistentDatumError(
                "active set emptied out although the arc datum is nonzero")
        if np.array_equal(new_omega, omega):
            converged = pde_res <= cfg.residual_tol
            omega = new_omega
            break
        if history and np.array_equal(new_omega, history[-1]):
            notes.append(
                f"active set oscillates between sizes {int(new_omega.sum())} "
                f"and {int(omega.sum())}")
            omega = new_omega
            break
        history.append(omega)
        omega = new_omega
    else:
        it = cfg.max_outer_iters
        notes.append("active-set iteration hit max_outer_iters")
    active = ActiveSet(grid, omega)
    off_max = _offomega_hessian_max(grid, u, omega)
    field = ScalarField(grid, np.where(grid.valid, u, np.nan))
    report = SolveReport(mode="nosign", converged=converged, outer_iterations=it,
                         pde_residual=pde_res, offomega_hessian_max=off_max,
                         K=cfg.K, residual_tol=cfg.residual_tol, notes=notes)
    return field, active, report


def nondegeneracy_profile(u: ScalarField, center, radii: Sequence[float]):
    """Per radius r, sup over the half circle of radius r of u / r^2.

    Radii whose half circle leaves the domain entirely are omitted.
    """
    c = np.asarray(center, dtype=float)
    if abs(c[1]) > 1e-12:
        raise ValueError("center must lie on the flat boundary (x2 = 0)")
    out = []
    h = u.grid.h
    for r in radii:
        if r <= 0:
            continue
        n = max(64, int(np.ceil(np.pi * r / (0.5 * h))))
        theta = np.linspace(0.0, np.pi, n + 1)
        pts = np.stack([c[0] + r * np.cos(theta), r * np.sin(theta)], axis=1)
        vals = interpolate_many(u, pts)
        good = np.isfinite(vals)
        if not np.any(good):
            continue
        out.append((float(r), float(np.max(vals[good]) / r ** 2)))
    return out
