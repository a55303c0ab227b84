"""Cartesian grid on the half disk B1+ and boundary-aware discrete calculus.

The grid covers the box [-1, 1] x [0, 1] with spacing h; nodes are
classified as exterior (outside the closed half disk), flat-boundary
(x2 = 0), arc-boundary (in the disk but without a full 9-point stencil of
in-disk nodes), or interior.  Interior nodes always admit central
differences and the full 9-point Hessian stencil.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import _kernels

EXTERIOR, INTERIOR, FLAT, ARC = 0, 1, 2, 3

_R2_TOL = 1e-12


@dataclass(frozen=True)
class HalfDiskGrid:
    h: float

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        inv = 1.0 / self.h
        if abs(inv - round(inv)) > 1e-9:
            raise ValueError(f"1/h must be an integer, got h={self.h}")
        n = int(round(inv))
        nx, ny = 2 * n + 1, n + 1
        x1 = np.linspace(-1.0, 1.0, nx)
        x2 = np.linspace(0.0, 1.0, ny)
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        r2 = X1 ** 2 + X2 ** 2
        indisk = r2 <= 1.0 + _R2_TOL
        cls = np.full((nx, ny), EXTERIOR, dtype=np.int8)
        flat = indisk & (X2 == 0.0)
        cls[flat] = FLAT
        upper = indisk & (X2 > 0.0)
        # interior nodes need all 8 neighbors inside the closed disk
        padded = np.zeros((nx + 2, ny + 2), dtype=bool)
        padded[1:-1, 1:-1] = indisk
        full_stencil = np.ones((nx, ny), dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                full_stencil &= padded[1 + di:nx + 1 + di, 1 + dj:ny + 1 + dj]
        cls[upper & full_stencil] = INTERIOR
        cls[upper & ~full_stencil] = ARC
        for name, val in (("nx", nx), ("ny", ny), ("x1", x1), ("x2", x2),
                          ("X1", X1), ("X2", X2), ("cls", cls)):
            object.__setattr__(self, name, val)
        for arr in (x1, x2, X1, X2, cls):
            arr.setflags(write=False)

    @property
    def valid(self) -> np.ndarray:
        return self.cls != EXTERIOR

    @property
    def interior(self) -> np.ndarray:
        return self.cls == INTERIOR

    @property
    def flat(self) -> np.ndarray:
        return self.cls == FLAT

    @property
    def arc(self) -> np.ndarray:
        return self.cls == ARC

    def radius(self) -> np.ndarray:
        return np.hypot(self.X1, self.X2)


@dataclass(frozen=True)
class ScalarField:
    grid: HalfDiskGrid
    values: np.ndarray  # (nx, ny), NaN at exterior nodes

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.nx, self.grid.ny):
            raise ValueError("values shape does not match the grid")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: HalfDiskGrid, fn: Callable) -> "ScalarField":
        vals = np.where(grid.valid, fn(grid.X1, grid.X2), np.nan)
        return cls(grid, vals)

    @classmethod
    def zeros(cls, grid: HalfDiskGrid) -> "ScalarField":
        return cls(grid, np.where(grid.valid, 0.0, np.nan))

    def max_abs(self) -> float:
        v = self.values[self.grid.valid]
        return float(np.nanmax(np.abs(v))) if v.size else 0.0


@dataclass(frozen=True)
class HessianField:
    grid: HalfDiskGrid
    xx: np.ndarray
    yy: np.ndarray
    xy: np.ndarray

    def at(self, i: int, j: int) -> np.ndarray:
        return np.array([[self.xx[i, j], self.xy[i, j]],
                         [self.xy[i, j], self.yy[i, j]]])


def gradient(u: ScalarField):
    """(du/dx1, du/dx2) arrays; central interior, one-sided second order at edges."""
    g = u.grid
    if g.nx < 3 or g.ny < 3:
        raise ValueError("grid too coarse for one-sided stencils (need >= 3 nodes per direction)")
    vals = np.ascontiguousarray(np.where(g.valid, u.values, 0.0))
    return _kernels.gradient_components(vals, np.ascontiguousarray(g.valid), g.h)


def hessian(u: ScalarField) -> HessianField:
    """Discrete 9-point Hessian at interior nodes (NaN elsewhere)."""
    g = u.grid
    if g.nx < 3 or g.ny < 3:
        raise ValueError("grid too coarse for second-difference stencils")
    vals = np.ascontiguousarray(np.where(g.valid, u.values, 0.0))
    xx, yy, xy = _kernels.hessian_components(vals, np.ascontiguousarray(g.interior), g.h)
    return HessianField(g, xx, yy, xy)


def interpolate(u: ScalarField, p) -> float:
    """Bilinear interpolation at a single point inside the half disk."""
    p = np.asarray(p, dtype=float)
    if p[1] < 0.0 or p[0] ** 2 + p[1] ** 2 > 1.0 + _R2_TOL:
        raise ValueError(f"point {p.tolist()} lies outside the half disk")
    out = interpolate_many(u, p.reshape(1, 2))[0]
    if np.isnan(out):
        raise ValueError(f"point {p.tolist()} has no fully valid interpolation cell")
    return float(out)


def interpolate_many(u: ScalarField, pts) -> np.ndarray:
    """Vectorized bilinear interpolation; NaN where a cell corner is invalid."""
    g = u.grid
    pts = np.ascontiguousarray(np.asarray(pts, dtype=float).reshape(-1, 2))
    vals = np.ascontiguousarray(np.where(g.valid, u.values, 0.0))
    return _kernels.bilinear_sample(vals, np.ascontiguousarray(g.valid), g.h,
                                    float(g.x1[0]), float(g.x2[0]), pts)


def restrict(u: ScalarField, radius: float, center=(0.0, 0.0)):
    """Index arrays (ii, jj) of non-exterior nodes strictly inside B+_radius(center)."""
    g = u.grid
    c = np.asarray(center, dtype=float)
    d2 = (g.X1 - c[0]) ** 2 + (g.X2 - c[1]) ** 2
    mask = g.valid & (d2 < radius ** 2)
    return np.nonzero(mask)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def dump_field(u: ScalarField, path) -> None:
    """One JSON header line, then row-major little-endian float64 values."""
    g = u.grid
    header = {
        "nx": g.nx,
        "ny": g.ny,
        "h": g.h,
        "box": [-1.0, 1.0, 0.0, 1.0],
        "byte_order": "little",
        "count": g.nx * g.ny,
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def load_field(path) -> ScalarField:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        raw = f.read()
    count = int(header["count"])
    vals = np.frombuffer(raw, dtype="<f8", count=count).astype(np.float64)
    grid = HalfDiskGrid(float(header["h"]))
    if (grid.nx, grid.ny) != (header["nx"], header["ny"]):
        raise ValueError("field dump header is inconsistent with its spacing")
    return ScalarField(grid, vals.reshape(grid.nx, grid.ny))


def export_csv(u: ScalarField, path) -> None:
    """CSV rows (x1, x2, value) over non-exterior nodes, row-major."""
    g = u.grid
    ii, jj = np.nonzero(g.valid)
    with open(path, "w", encoding="utf-8") as f:
        f.write("x1,x2,value\n")
        for i, j in zip(ii, jj):
            f.write(f"{g.x1[i]!r},{g.x2[j]!r},{u.values[i, j]!r}\n")
