"""Free-boundary geometry: contour extraction and touch diagnostics.

The free boundary Gamma is the marching-squares contour of the active-set
indicator over cells whose four corners are interior nodes; GammaI bounds
the interior of the discrete zero set of u.  Saddle cells are resolved by
the average-corner rule, which is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import HalfDiskGrid, ScalarField
from .solver import ActiveSet


@dataclass(frozen=True)
class BoundaryCurve:
    label: str  # "Gamma" or "GammaI"
    points: np.ndarray  # (m, 2) vertex coordinates, all with x2 > 0
    segments: np.ndarray  # (k, 2) vertex index pairs

    @classmethod
    def empty(cls, label: str) -> "BoundaryCurve":
        return cls(label, np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64))

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0


@dataclass(frozen=True)
class ModulusTable:
    rows: tuple  # ((r, omega, empty_flag), ...) with omega = sup x2/|x| over |x| <= r
    r0: float  # largest radius with nonempty data (0 if none)


# marching-squares case table: corner order LL, LR, UR, UL; edges B, R, T, L
_CASES = {
    0: [], 15: [],
    1: [("L", "B")], 14: [("L", "B")],
    2: [("B", "R")], 13: [("B", "R")],
    4: [("R", "T")], 11: [("R", "T")],
    8: [("L", "T")], 7: [("L", "T")],
    3: [("L", "R")], 12: [("L", "R")],
    6: [("B", "T")], 9: [("B", "T")],
}


def _march(mask: np.ndarray, cell_ok: np.ndarray, x1: np.ndarray, x2: np.ndarray):
    """Edge-midpoint marching squares on a binary node mask."""
    nx, ny = mask.shape
    h1 = 0.5 * (x1[1] - x1[0])
    segs = []
    ci, cj = np.nonzero(cell_ok)
    for i, j in zip(ci, cj):
        c0 = mask[i, j]
        c1 = mask[i + 1, j]
        c2 = mask[i + 1, j + 1]
        c3 = mask[i, j + 1]
        code = int(c0) | (int(c1) << 1) | (int(c2) << 2) | (int(c3) << 3)
        if code in (0, 15):
            continue
        mid = {
            "B": (x1[i] + h1, x2[j]),
            "R": (x1[i + 1], x2[j] + h1),
            "T": (x1[i] + h1, x2[j + 1]),
            "L": (x1[i], x2[j] + h1),
        }
        if code in (5, 10):
            avg = 0.25 * (int(c0) + int(c1) + int(c2) + int(c3))
            if code == 5:
                pairs = [("L", "B"), ("T", "R")] if avg >= 0.5 else [("L", "T"), ("B", "R")]
            else:
                pairs = [("B", "L"), ("R", "T")] if avg >= 0.5 else [("B", "R"), ("L", "T")]
        else:
            pairs = _CASES[code]
        for ea, eb in pairs:
            segs.append((mid[ea], mid[eb]))
    return segs


def _curve_from_segments(segs, label: str, min_x2: float) -> BoundaryCurve:
    kept = [(a, b) for a, b in segs if min(a[1], b[1]) > min_x2]
    if not kept:
        return BoundaryCurve.empty(label)
    index = {}
    points = []

    def vid(p):
        key = (round(p[0], 12), round(p[1], 12))
        if key not in index:
            index[key] = len(points)
            points.append(key)
        return index[key]

    seg_idx = np.array([[vid(a), vid(b)] for a, b in kept], dtype=np.int64)
    return BoundaryCurve(label, np.array(points, dtype=float), seg_idx)


def extract_gamma(active: ActiveSet) -> BoundaryCurve:
    """Contour of the active set; only segments above x2 = h/2 are kept."""
    g = active.grid
    if not np.any(active.mask) or np.array_equal(active.mask, g.interior):
        return BoundaryCurve.empty("Gamma")
    interior = g.interior
    cell_ok = (interior[:-1, :-1] & interior[1:, :-1]
               & interior[1:, 1:] & interior[:-1, 1:])
    segs = _march(active.mask, cell_ok, g.x1, g.x2)
    return _curve_from_segments(segs, "Gamma", 0.5 * g.h)


def extract_gamma_i(u: ScalarField, tol: float) -> BoundaryCurve:
    """Boundary of the interior of the discrete zero set {|u| <= tol} in {x2 > 0}."""
    g = u.grid
    zero = g.valid & (np.abs(np.nan_to_num(u.values, nan=0.0)) <= tol)
    padded = np.zeros((g.nx + 2, g.ny + 2), dtype=bool)
    padded[1:-1, 1:-1] = zero
    zint = zero.copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            zint &= padded[1 + di:g.nx + 1 + di, 1 + dj:g.ny + 1 + dj]
    if not np.any(zint):
        return BoundaryCurve.empty("GammaI")
    valid = g.valid
    cell_ok = (valid[:-1, :-1] & valid[1:, :-1] & valid[1:, 1:] & valid[:-1, 1:])
    segs = _march(zint, cell_ok, g.x1, g.x2)
    return _curve_from_segments(segs, "GammaI", 0.5 * g.h)


def modulus_table(curve: BoundaryCurve, radii: Sequence[float]) -> ModulusTable:
    """Per radius r: sup of x2/|x| over curve vertices with |x| <= r.

    Empty truncations contribute omega = 0 with an explicit emptiness
    marker, so a missing free boundary is distinguishable from flat touch.
    """
    rows = []
    if curve.is_empty:
        rows = [(float(r), 0.0, True) for r in radii]
        return ModulusTable(tuple(rows), 0.0)
    norms = np.linalg.norm(curve.points, axis=1)
    ratio = curve.points[:, 1] / norms
    r0 = 0.0
    for r in radii:
        sel = norms <= float(r)
        if np.any(sel):
            rows.append((float(r), float(ratio[sel].max()), False))
            r0 = max(r0, float(r))
        else:
            rows.append((float(r), 0.0, True))
    return ModulusTable(tuple(rows), r0)


def cone_clearance(curve: BoundaryCurve, epsilon: float, rho: float):
    """True iff no curve vertex lies in B+_rho inside the cone {x2 > eps |x1|}."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if curve.is_empty:
        return True, np.zeros((0, 2))
    norms = np.linalg.norm(curve.points, axis=1)
    bad = (norms < rho) & (curve.points[:, 1] > epsilon * np.abs(curve.points[:, 0]))
    witnesses = curve.points[bad]
    return not np.any(bad), witnesses


def gamma_i_clearance(curve_i: BoundaryCurve) -> float:
    """Largest delta with no GammaI vertex in B+_delta; +inf for an empty curve."""
    if curve_i.is_empty:
        return float("inf")
    return float(np.min(np.linalg.norm(curve_i.points, axis=1)))


def complement_measure(active: ActiveSet, s: float):
    """(discrete area of B+_s minus Omega, empty-discrete-interior flag)."""
    if not (0.0 < s <= 1.0):
        raise ValueError("s must lie in (0, 1]")
    g = active.grid
    r = g.radius()
    comp = g.interior & (r < s) & ~active.mask
    measure = float(comp.sum()) * g.h * g.h
    # a discrete interior point of the complement: all 8 neighbors outside Omega
    padded = np.ones((g.nx + 2, g.ny + 2), dtype=bool)
    padded[1:-1, 1:-1] = ~active.mask
    deep = comp.copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            deep &= padded[1 + di:g.nx + 1 + di, 1 + dj:g.ny + 1 + dj]
    return measure, not bool(np.any(deep))


def export_curve_csv(curve: BoundaryCurve, path) -> None:
    """CSV polyline: one row (segment id, endpoint coordinates) per segment."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("segment,x1_a,x2_a,x1_b,x2_b\n")
        for k, (a, b) in enumerate(curve.segments):
            pa, pb = curve.points[a], curve.points[b]
            f.write(f"{k},{pa[0]!r},{pa[1]!r},{pb[0]!r},{pb[1]!r}\n")


def export_modulus_csv(table: ModulusTable, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("r,omega,empty\n")
        for r, omega, empty in table.rows:
            f.write(f"{r!r},{omega!r},{int(empty)}\n")
