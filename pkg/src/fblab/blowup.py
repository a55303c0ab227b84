"""Quadratic rescaling analysis at the origin.

The family u(r x) / r^2 is sampled on a reference half-disk grid, fitted
against the half-plane quadratic a*x1*x2 + b*x2^2, and classified: either
every rescaling looks like b*x2^2 with b > 0 (case I), or the tilted form
with a != 0 appears and the slope diagnostic M agrees with |a| (case II).

M is the shell-based surrogate for limsup_{|x|->0} |d1 u| / x2; nodes with
x2 < h are excluded so that one-sided difference noise is never divided by
a vanishing height, and the reported estimate extrapolates the last three
shells linearly to r = 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import HalfDiskGrid, ScalarField, gradient, interpolate_many
from .operators import EllipticOperator, evaluate

MIN_RADIUS_CELLS = 8  # radii below 8h are not resolvable


class Alternative(enum.Enum):
    CASE_I = "case-i"
    CASE_II = "case-ii"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class RescaleSchedule:
    radii: tuple

    def __post_init__(self):
        r = tuple(float(x) for x in self.radii)
        if any(not (0.0 < x < 1.0) for x in r):
            raise ValueError("radii must lie in (0, 1)")
        if any(r[k + 1] >= r[k] for k in range(len(r) - 1)):
            raise ValueError("radii must be strictly decreasing")
        object.__setattr__(self, "radii", r)

    @classmethod
    def dyadic(cls, h: float, k_max: Optional[int] = None) -> "RescaleSchedule":
        radii = []
        k = 1
        while 2.0 ** -k >= MIN_RADIUS_CELLS * h and (k_max is None or k <= k_max):
            radii.append(2.0 ** -k)
            k += 1
        if not radii:
            raise ValueError(f"grid spacing {h} leaves no resolvable dyadic radius")
        return cls(tuple(radii))


@dataclass(frozen=True)
class QuadraticBlowup:
    a: float
    b: float
    residual: float  # relative max-norm misfit on the reference half ball
    radius: float = float("nan")


@dataclass(frozen=True)
class MProfile:
    entries: tuple  # ((shell radius, shell max of |d1 u| / x2), ...)
    m_estimate: float  # linear extrapolation to r = 0 over the smallest shells
    m_smallest: float  # raw value at the smallest shell


@dataclass
class BlowupThresholds:
    fit_accept: float = 0.05
    m_zero_tol: float = 0.05
    a_zero_tol: float = 0.05
    uniq_tol: float = 0.05
    pde_tol: float = 0.05

    def to_dict(self) -> dict:
        return {
            "fit_accept": self.fit_accept,
            "m_zero_tol": self.m_zero_tol,
            "a_zero_tol": self.a_zero_tol,
            "uniq_tol": self.uniq_tol,
            "pde_tol": self.pde_tol,
        }


def rescale(u: ScalarField, r: float, ref_grid: HalfDiskGrid) -> ScalarField:
    """u(r x) / r^2 sampled on the reference grid; unreachable nodes are NaN."""
    if not (0.0 < r < 1.0):
        raise ValueError("rescaling radius must lie in (0, 1)")
    g = ref_grid
    pts = np.stack([r * g.X1.ravel(), r * g.X2.ravel()], axis=1)
    vals = interpolate_many(u, pts).reshape(g.nx, g.ny) / (r * r)
    vals = np.where(g.valid, vals, np.nan)
    return ScalarField(g, vals)


def fit_halfplane_quadratic(v: ScalarField, radius: float = float("nan")) -> QuadraticBlowup:
    """Least-squares fit of a*x1*x2 + b*x2^2 over valid interior nodes."""
    g = v.grid
    sel = g.interior & np.isfinite(v.values)
    if int(sel.sum()) < 10:
        raise ValueError("fewer than 10 valid nodes for the quadratic fit")
    x1 = g.X1[sel]
    x2 = g.X2[sel]
    y = v.values[sel]
    A = np.stack([x1 * x2, x2 * x2], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    misfit = float(np.max(np.abs(y - A @ coef)))
    scale = max(1.0, float(np.max(np.abs(y))))
    return QuadraticBlowup(a=float(coef[0]), b=float(coef[1]),
                           residual=misfit / scale, radius=radius)


def m_profile(u: ScalarField, shells: Sequence[float]) -> MProfile:
    """Shell maxima of |d1 u| / x2 (2D slope diagnostic) plus an r->0 extrapolation."""
    g = u.grid
    h = g.h
    gx, _ = gradient(u)
    r = g.radius()
    entries = []
    for shell in sorted(set(float(s) for s in shells), reverse=True):
        if shell < MIN_RADIUS_CELLS * h:
            continue
        sel = (g.X2 >= h) & (r >= 0.5 * shell) & (r <= shell) & np.isfinite(gx)
        if not np.any(sel):
            continue
        entries.append((shell, float(np.max(np.abs(gx[sel]) / g.X2[sel]))))
    if not entries:
        raise ValueError("no shell produced any admissible node")
    entries.sort(key=lambda e: e[0], reverse=True)
    m_smallest = entries[-1][1]
    tail = entries[-3:]
    if len(tail) >= 3:
        rr = np.array([e[0] for e in tail])
        vv = np.array([e[1] for e in tail])
        slope, intercept = np.polyfit(rr, vv, 1)
        m_est = max(0.0, float(intercept))
    else:
        m_est = m_smallest
    return MProfile(entries=tuple(entries), m_estimate=m_est, m_smallest=m_smallest)


def classify_blowup(profile: MProfile, fits: Sequence[QuadraticBlowup],
                    thresholds: Optional[BlowupThresholds] = None):
    """Blow-up alternative from the fit sequence and the slope diagnostic.

    Returns (Alternative, diagnostics dict); an undecidable configuration
    yields INDETERMINATE with the offending quantities recorded.
    """
    th = thresholds or BlowupThresholds()
    accepted = [f for f in fits if f.residual <= th.fit_accept]
    diag = {
        "accepted_fits": len(accepted),
        "total_fits": len(fits),
        "m_estimate": profile.m_estimate,
        "thresholds": th.to_dict(),
        "fits": [{"radius": f.radius, "a": f.a, "b": f.b, "residual": f.residual}
                 for f in fits],
    }
    if len(accepted) < 3:
        diag["reason"] = "fewer than 3 fits below the acceptance residual"
        return Alternative.INDETERMINATE, diag
    a_vals = np.array([f.a for f in accepted])
    b_vals = np.array([f.b for f in accepted])
    a_spread = float(a_vals.max() - a_vals.min())
    diag["a_mean"] = float(a_vals.mean())
    diag["b_mean"] = float(b_vals.mean())
    diag["a_spread"] = a_spread
    m = profile.m_estimate
    if m <= th.m_zero_tol and np.all(np.abs(a_vals) <= th.a_zero_tol) and b_vals.mean() > 0:
        return Alternative.CASE_I, diag
    if m > th.m_zero_tol and a_spread <= th.uniq_tol and abs(a_vals.mean()) > th.a_zero_tol:
        return Alternative.CASE_II, diag
    diag["reason"] = "slope diagnostic and fitted coefficients disagree"
    return Alternative.INDETERMINATE, diag


def uniqueness_diagnostic(fits: Sequence[QuadraticBlowup],
                          op: Optional[EllipticOperator] = None,
                          f_target: float = 1.0,
                          thresholds: Optional[BlowupThresholds] = None) -> dict:
    """Cross-radius consistency of the fitted (a, b) pairs.

    Also checks that the fitted limit solves the rescaled equation:
    F(D2 u0) for u0 = a*x1*x2 + b*x2^2 should equal the source value.
    """
    th = thresholds or BlowupThresholds()
    if len(fits) < 3:
        raise ValueError("uniqueness diagnostic needs at least 3 fits")
    pts = np.array([[f.a, f.b] for f in fits])
    spread = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            spread = max(spread, float(np.linalg.norm(pts[i] - pts[j])))
    out = {
        "spread": spread,
        "consistent": spread <= th.uniq_tol,
        "a_mean": float(pts[:, 0].mean()),
        "b_mean": float(pts[:, 1].mean()),
    }
    if op is not None:
        a, b = out["a_mean"], out["b_mean"]
        H0 = np.array([[0.0, a], [a, 2.0 * b]])
        val = evaluate(op, H0, (0.0, 0.0))
        out["pde_value"] = val
        out["pde_consistent"] = abs(val - f_target) <= th.pde_tol
    return out


def analyze_blowup(u: ScalarField, op: Optional[EllipticOperator] = None,
                   schedule: Optional[RescaleSchedule] = None,
                   thresholds: Optional[BlowupThresholds] = None,
                   ref_grid: Optional[HalfDiskGrid] = None) -> dict:
    """Full origin blow-up report: per-radius fits, M profile, classification.

    Refuses (raises ValueError) when the discrete gradient at the origin
    exceeds the grid spacing, since the rescaling family is only meaningful
    at a critical point of u.
    """
    g = u.grid
    th = thresholds or BlowupThresholds()
    schedule = schedule or RescaleSchedule.dyadic(g.h)
    gx, gy = gradient(u)
    i0 = int(np.argmin(np.abs(g.x1)))
    grad0 = float(np.hypot(np.nan_to_num(gx[i0, 0]), np.nan_to_num(gy[i0, 0])))
    if grad0 > g.h:
        raise ValueError(
            f"blow-up center rejected: |grad u(0)| = {grad0:.3e} exceeds h = {g.h}")
    ref = ref_grid or g
    fits = []
    for r in schedule.radii:
        v = rescale(u, r, ref)
        fits.append(fit_halfplane_quadratic(v, radius=r))
    profile = m_profile(u, schedule.radii)
    alternative, diag = classify_blowup(profile, fits, th)
    uniq = uniqueness_diagnostic(fits, op=op, thresholds=th) if len(fits) >= 3 else None
    return {
        "gradient_at_origin": grad0,
        "radii": list(schedule.radii),
        "fits": [{"radius": f.radius, "a": f.a, "b": f.b, "residual": f.residual}
                 for f in fits],
        "m_profile": {"entries": [list(e) for e in profile.entries],
                      "m_estimate": profile.m_estimate,
                      "m_smallest": profile.m_smallest},
        "classification": alternative.value,
        "diagnostics": diag,
        "uniqueness": uniq,
        "thresholds": th.to_dict(),
    }
