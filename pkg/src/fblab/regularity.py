"""Second-derivative regularity diagnostics.

Local best-fit quadratics on shrinking dyadic half balls, optionally
projected so the operator value of their Hessian hits a prescribed target;
mean-square oscillation of the discrete Hessian around those fits; and the
sup of |D2 u| over a region.  The matrix norm defaults to spectral, with
Frobenius available as an option.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ._kernels import sym2_spectral_norm
from .grid import HalfDiskGrid, ScalarField, hessian
from .operators import EllipticOperator, evaluate, linearize

MIN_FIT_NODES = 15
MIN_RADIUS_CELLS = 8


def _matrix_norm(M: np.ndarray, norm: str) -> float:
    if norm == "spectral":
        return float(np.max(np.abs(np.linalg.eigvalsh(M))))
    if norm == "fro":
        return float(np.linalg.norm(M))
    raise ValueError(f"unknown matrix norm {norm!r}")


@dataclass(frozen=True)
class QuadraticPolynomial:
    center: np.ndarray
    value: float
    grad: np.ndarray
    hess: np.ndarray

    def __call__(self, x1, x2):
        dx = np.asarray(x1, float) - self.center[0]
        dy = np.asarray(x2, float) - self.center[1]
        H = self.hess
        return (self.value + self.grad[0] * dx + self.grad[1] * dy
                + 0.5 * (H[0, 0] * dx * dx + 2.0 * H[0, 1] * dx * dy + H[1, 1] * dy * dy))


@dataclass(frozen=True)
class DyadicProfile:
    rho: float
    radii: tuple
    polynomials: tuple  # QuadraticPolynomial per level
    sup_misfit: tuple  # sup |u - P_k| on B+_{rho^k}
    normalized_misfit: tuple  # sup |u - P_k| / rho^{2k}
    increments: tuple  # |D2 P_k - D2 P_{k-1}|, length = levels - 1
    uniform_bound_ok: bool
    constraint_errors: tuple


@dataclass(frozen=True)
class BmoProfile:
    rho: float
    radii: tuple
    values: tuple  # mean squared Frobenius distance of D2 u from D2 P_k


def _ball_nodes(grid: HalfDiskGrid, x0, r: float):
    d2 = (grid.X1 - x0[0]) ** 2 + (grid.X2 - x0[1]) ** 2
    return grid.valid & (d2 <= r * r)


def fit_local_quadratic(u: ScalarField, x0, r: float,
                        constraint: Optional[Tuple[EllipticOperator, float]] = None
                        ) -> QuadraticPolynomial:
    """Least-squares quadratic on B+_r(x0), optionally constrained.

    The constraint (op, target) corrects the fitted Hessian H along the
    direction linearize(op, H) until evaluate(op, H) = target, a scalar
    Newton iteration that converges in one step for linear kinds.
    """
    g = u.grid
    x0 = np.asarray(x0, dtype=float)
    sel = _ball_nodes(g, x0, r) & np.isfinite(u.values)
    n = int(sel.sum())
    if n < MIN_FIT_NODES:
        raise ValueError(f"only {n} nodes in B+_{r}({x0.tolist()}); need {MIN_FIT_NODES}")
    dx = g.X1[sel] - x0[0]
    dy = g.X2[sel] - x0[1]
    y = u.values[sel]
    A = np.stack([np.ones_like(dx), dx, dy, dx * dx, dx * dy, dy * dy], axis=1)
    c, *_ = np.linalg.lstsq(A, y, rcond=None)
    H = np.array([[2.0 * c[3], c[4]], [c[4], 2.0 * c[5]]])
    if constraint is not None:
        op, target = constraint
        for _ in range(50):
            val = evaluate(op, H, x0)
            if abs(val - target) <= 1e-10:
                break
            G = linearize(op, H)
            slope = float(np.sum(linearize(op, H) * G))
            if slope == 0.0:
                raise ValueError("constraint direction is degenerate")
            H = H + ((target - val) / slope) * G
        if abs(evaluate(op, H, x0) - target) > 1e-8:
            raise ValueError("constraint projection did not converge")
    return QuadraticPolynomial(center=x0, value=float(c[0]),
                               grad=np.array([c[1], c[2]]), hess=H)


def _dyadic_levels(grid: HalfDiskGrid, x0, rho: float):
    radii = []
    k = 0
    while True:
        r = min(rho ** k, 1.0)
        if r < MIN_RADIUS_CELLS * grid.h:
            break
        if int((_ball_nodes(grid, x0, r)).sum()) < MIN_FIT_NODES:
            break
        radii.append(r)
        k += 1
    if not radii:
        raise ValueError("no dyadic level is resolvable on this grid")
    return radii


def dyadic_profile(u: ScalarField, x0, op: EllipticOperator, target: float,
                   rho: float = 0.5, matrix_norm: str = "spectral") -> DyadicProfile:
    """Constrained quadratic approximations on B+_{rho^k}(x0), per level.

    Records the sup misfit, the misfit normalized by rho^{2k}, and the
    Hessian increments between consecutive levels.  The uniform-bound flag
    is true when the normalized misfits stay within a fixed multiple of
    the coarsest level (no blow-up down the scales).
    """
    g = u.grid
    x0 = np.asarray(x0, dtype=float)
    if abs(x0[1]) > 1e-12:
        raise ValueError("dyadic center must lie on the flat boundary")
    radii = _dyadic_levels(g, x0, rho)
    polys, sups, norms, cerrs = [], [], [], []
    for k, r in enumerate(radii):
        P = fit_local_quadratic(u, x0, r, constraint=(op, target))
        sel = _ball_nodes(g, x0, r) & np.isfinite(u.values)
        mis = float(np.max(np.abs(u.values[sel] - P(g.X1[sel], g.X2[sel]))))
        polys.append(P)
        sups.append(mis)
        norms.append(mis / rho ** (2 * k))
        cerrs.append(abs(evaluate(op, P.hess, x0) - target))
    incs = [
        _matrix_norm(polys[k].hess - polys[k - 1].hess, matrix_norm)
        for k in range(1, len(polys))
    ]
    scale = max(1.0, float(np.nanmax(np.abs(u.values[g.valid]))))
    floor = 1e-9 * scale
    ok = all(m <= max(2.0 * norms[0], floor) for m in norms)
    return DyadicProfile(rho=rho, radii=tuple(radii), polynomials=tuple(polys),
                         sup_misfit=tuple(sups), normalized_misfit=tuple(norms),
                         increments=tuple(incs), uniform_bound_ok=ok,
                         constraint_errors=tuple(cerrs))


def bmo_profile(u: ScalarField, x0, op: EllipticOperator, target: float,
                rho: float = 0.5) -> BmoProfile:
    """Mean squared Frobenius distance of D2 u from D2 P_k over B+_{rho^k/2}(x0)."""
    g = u.grid
    x0 = np.asarray(x0, dtype=float)
    radii = _dyadic_levels(g, x0, rho)
    hf = hessian(u)
    values = []
    used = []
    for k, r in enumerate(radii):
        P = fit_local_quadratic(u, x0, r, constraint=(op, target))
        H = P.hess
        sel = _ball_nodes(g, x0, 0.5 * r) & g.interior & np.isfinite(hf.xx)
        if not np.any(sel):
            continue
        d2 = ((hf.xx[sel] - H[0, 0]) ** 2
              + 2.0 * (hf.xy[sel] - H[0, 1]) ** 2
              + (hf.yy[sel] - H[1, 1]) ** 2)
        values.append(float(np.mean(d2)))
        used.append(r)
    return BmoProfile(rho=rho, radii=tuple(used), values=tuple(values))


def c11_sup(u: ScalarField, region_radius: float, matrix_norm: str = "spectral") -> float:
    """Max matrix norm of the discrete Hessian over interior nodes in B+_radius."""
    g = u.grid
    if region_radius > 1.0 - 2.0 * g.h:
        raise ValueError("region radius must stay 2h away from the unit arc")
    hf = hessian(u)
    sel = g.interior & (g.radius() <= region_radius) & np.isfinite(hf.xx)
    if not np.any(sel):
        return 0.0
    if matrix_norm == "spectral":
        norms = sym2_spectral_norm(np.nan_to_num(hf.xx), np.nan_to_num(hf.yy),
                                   np.nan_to_num(hf.xy))
        return float(np.max(norms[sel]))
    if matrix_norm == "fro":
        return float(np.max(np.sqrt(hf.xx[sel] ** 2 + 2 * hf.xy[sel] ** 2 + hf.yy[sel] ** 2)))
    raise ValueError(f"unknown matrix norm {matrix_norm!r}")


def export_profiles_csv(dyadic: DyadicProfile, bmo: BmoProfile, path) -> None:
    """CSV rows (k, radius, sup misfit, normalized misfit, increment, bmo)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("k,radius,sup_misfit,normalized_misfit,increment,bmo\n")
        bmo_map = dict(zip(bmo.radii, bmo.values))
        for k, r in enumerate(dyadic.radii):
            inc = dyadic.increments[k - 1] if k >= 1 else float("nan")
            f.write(f"{k},{r!r},{dyadic.sup_misfit[k]!r},"
                    f"{dyadic.normalized_misfit[k]!r},{inc!r},"
                    f"{bmo_map.get(r, float('nan'))!r}\n")
