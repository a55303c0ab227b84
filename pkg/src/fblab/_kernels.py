"""Hot numeric kernels: stencils, bilinear sampling, 2x2 symmetric eigenvalues.

Every kernel exists in two functionally identical flavors:

* a looped implementation compiled with ``numba.njit`` (default), and
* a vectorized pure-numpy fallback.

Set the environment variable ``FBLAB_NUMBA=0`` before import to force the
numpy path (the same happens automatically when numba is not importable).
``benchmarks/bench_kernels.py`` times the two against each other.
"""

from __future__ import annotations

import os

import numpy as np


def _numba_requested() -> bool:
    flag = os.environ.get("FBLAB_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def _shifted(a, di, dj, fill):
    """Array shifted so out[i, j] = a[i + di, j + dj] (fill outside)."""
    out = np.full_like(a, fill)
    nx, ny = a.shape
    si = slice(max(di, 0), nx + min(di, 0))
    sj = slice(max(dj, 0), ny + min(dj, 0))
    ti = slice(max(-di, 0), nx + min(-di, 0))
    tj = slice(max(-dj, 0), ny + min(-dj, 0))
    out[ti, tj] = a[si, sj]
    return out


def gradient_numpy(vals, valid, h):
    """First derivatives on a uniform grid, boundary-aware.

    Central differences where both neighbors are valid, second-order
    one-sided stencils otherwise.  Returns (gx, gy) with NaN at nodes
    that are invalid or admit no second-order stencil.
    """
    v = np.where(valid, vals, np.nan)
    gx = np.full_like(vals, np.nan)
    gy = np.full_like(vals, np.nan)
    for axis, g in ((0, gx), (1, gy)):
        def sh(k):
            return _shifted(v, k if axis == 0 else 0, k if axis == 1 else 0, np.nan)

        def ok(k):
            return _shifted(valid, k if axis == 0 else 0, k if axis == 1 else 0, False)

        central = (sh(1) - sh(-1)) / (2.0 * h)
        fwd = (-3.0 * v + 4.0 * sh(1) - sh(2)) / (2.0 * h)
        bwd = (3.0 * v - 4.0 * sh(-1) + sh(-2)) / (2.0 * h)
        c_ok = ok(1) & ok(-1)
        f_ok = ok(1) & ok(2)
        b_ok = ok(-1) & ok(-2)
        pick = np.where(c_ok, central, np.where(f_ok, fwd, np.where(b_ok, bwd, np.nan)))
        g[...] = np.where(valid, pick, np.nan)
    return gx, gy


def hessian_numpy(vals, interior, h):
    """Second derivatives (9-point) at nodes flagged interior; NaN elsewhere."""
    v = vals
    h2 = h * h
    uxx = (_shifted(v, 1, 0, np.nan) - 2.0 * v + _shifted(v, -1, 0, np.nan)) / h2
    uyy = (_shifted(v, 0, 1, np.nan) - 2.0 * v + _shifted(v, 0, -1, np.nan)) / h2
    uxy = (
        _shifted(v, 1, 1, np.nan)
        - _shifted(v, 1, -1, np.nan)
        - _shifted(v, -1, 1, np.nan)
        + _shifted(v, -1, -1, np.nan)
    ) / (4.0 * h2)
    mask = ~interior
    for a in (uxx, uyy, uxy):
        a[mask] = np.nan
    return uxx, uyy, uxy


def bilinear_numpy(vals, valid, h, x1min, x2min, pts):
    """Bilinear interpolation at pts (m, 2); NaN where a cell corner is invalid."""
    nx, ny = vals.shape
    fx = (pts[:, 0] - x1min) / h
    fy = (pts[:, 1] - x2min) / h
    i = np.clip(np.floor(fx).astype(np.int64), 0, nx - 2)
    j = np.clip(np.floor(fy).astype(np.int64), 0, ny - 2)
    tx = fx - i
    ty = fy - j
    inside = (fx >= -1e-12) & (fx <= nx - 1 + 1e-12) & (fy >= -1e-12) & (fy <= ny - 1 + 1e-12)
    ok = valid[i, j] & valid[i + 1, j] & valid[i, j + 1] & valid[i + 1, j + 1] & inside
    out = (
        vals[i, j] * (1 - tx) * (1 - ty)
        + vals[i + 1, j] * tx * (1 - ty)
        + vals[i, j + 1] * (1 - tx) * ty
        + vals[i + 1, j + 1] * tx * ty
    )
    return np.where(ok, out, np.nan)


def sym2_eigenvalues_numpy(axx, ayy, axy):
    """Eigenvalues (ascending) of the 2x2 symmetric matrices [[axx, axy], [axy, ayy]]."""
    t = 0.5 * (axx + ayy)
    d = np.hypot(0.5 * (axx - ayy), axy)
    return t - d, t + d


def sym2_spectral_norm_numpy(axx, ayy, axy):
    t = 0.5 * (axx + ayy)
    d = np.hypot(0.5 * (axx - ayy), axy)
    return np.abs(t) + d


# ---------------------------------------------------------------------------
# numba implementations (same contracts, explicit loops)
# ---------------------------------------------------------------------------

def _build_numba_impls():
    from numba import njit

    @njit(cache=True)
    def gradient_nb(vals, valid, h):
        nx, ny = vals.shape
        gx = np.full((nx, ny), np.nan)
        gy = np.full((nx, ny), np.nan)
        for i in range(nx):
            for j in range(ny):
                if not valid[i, j]:
                    continue
                # x direction
                if 0 < i < nx - 1 and valid[i - 1, j] and valid[i + 1, j]:
                    gx[i, j] = (vals[i + 1, j] - vals[i - 1, j]) / (2.0 * h)
                elif i + 2 < nx and valid[i + 1, j] and valid[i + 2, j]:
                    gx[i, j] = (-3.0 * vals[i, j] + 4.0 * vals[i + 1, j] - vals[i + 2, j]) / (2.0 * h)
                elif i - 2 >= 0 and valid[i - 1, j] and valid[i - 2, j]:
                    gx[i, j] = (3.0 * vals[i, j] - 4.0 * vals[i - 1, j] + vals[i - 2, j]) / (2.0 * h)
                # y direction
                if 0 < j < ny - 1 and valid[i, j - 1] and valid[i, j + 1]:
                    gy[i, j] = (vals[i, j + 1] - vals[i, j - 1]) / (2.0 * h)
                elif j + 2 < ny and valid[i, j + 1] and valid[i, j + 2]:
                    gy[i, j] = (-3.0 * vals[i, j] + 4.0 * vals[i, j + 1] - vals[i, j + 2]) / (2.0 * h)
                elif j - 2 >= 0 and valid[i, j - 1] and valid[i, j - 2]:
                    gy[i, j] = (3.0 * vals[i, j] - 4.0 * vals[i, j - 1] + vals[i, j - 2]) / (2.0 * h)
        return gx, gy

    @njit(cache=True)
    def hessian_nb(vals, interior, h):
        nx, ny = vals.shape
        uxx = np.full((nx, ny), np.nan)
        uyy = np.full((nx, ny), np.nan)
        uxy = np.full((nx, ny), np.nan)
        h2 = h * h
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                if not interior[i, j]:
                    continue
                uxx[i, j] = (vals[i + 1, j] - 2.0 * vals[i, j] + vals[i - 1, j]) / h2
                uyy[i, j] = (vals[i, j + 1] - 2.0 * vals[i, j] + vals[i, j - 1]) / h2
                uxy[i, j] = (
                    vals[i + 1, j + 1] - vals[i + 1, j - 1] - vals[i - 1, j + 1] + vals[i - 1, j - 1]
                ) / (4.0 * h2)
        return uxx, uyy, uxy

    @njit(cache=True)
    def bilinear_nb(vals, valid, h, x1min, x2min, pts):
        nx, ny = vals.shape
        m = pts.shape[0]
        out = np.full(m, np.nan)
        for k in range(m):
            fx = (pts[k, 0] - x1min) / h
            fy = (pts[k, 1] - x2min) / h
            if fx < -1e-12 or fx > nx - 1 + 1e-12 or fy < -1e-12 or fy > ny - 1 + 1e-12:
                continue
            i = int(np.floor(fx))
            j = int(np.floor(fy))
            if i > nx - 2:
                i = nx - 2
            if i < 0:
                i = 0
            if j > ny - 2:
                j = ny - 2
            if j < 0:
                j = 0
            if not (valid[i, j] and valid[i + 1, j] and valid[i, j + 1] and valid[i + 1, j + 1]):
                continue
            tx = fx - i
            ty = fy - j
            out[k] = (
                vals[i, j] * (1 - tx) * (1 - ty)
                + vals[i + 1, j] * tx * (1 - ty)
                + vals[i, j + 1] * (1 - tx) * ty
                + vals[i + 1, j + 1] * tx * ty
            )
        return out

    @njit(cache=True)
    def sym2_eig_nb(axx, ayy, axy):
        t = 0.5 * (axx + ayy)
        d = np.hypot(0.5 * (axx - ayy), axy)
        return t - d, t + d

    @njit(cache=True)
    def sym2_norm_nb(axx, ayy, axy):
        t = 0.5 * (axx + ayy)
        d = np.hypot(0.5 * (axx - ayy), axy)
        return np.abs(t) + d

    return {
        "gradient": gradient_nb,
        "hessian": hessian_nb,
        "bilinear": bilinear_nb,
        "sym2_eigenvalues": sym2_eig_nb,
        "sym2_spectral_norm": sym2_norm_nb,
    }


NUMPY_IMPLS = {
    "gradient": gradient_numpy,
    "hessian": hessian_numpy,
    "bilinear": bilinear_numpy,
    "sym2_eigenvalues": sym2_eigenvalues_numpy,
    "sym2_spectral_norm": sym2_spectral_norm_numpy,
}

NUMBA_IMPLS = _build_numba_impls() if _numba_available() else None

if _numba_requested() and NUMBA_IMPLS is not None:
    BACKEND = "numba"
    _ACTIVE = NUMBA_IMPLS
else:
    BACKEND = "numpy"
    _ACTIVE = NUMPY_IMPLS

gradient_components = _ACTIVE["gradient"]
hessian_components = _ACTIVE["hessian"]
bilinear_sample = _ACTIVE["bilinear"]
sym2_eigenvalues = _ACTIVE["sym2_eigenvalues"]
sym2_spectral_norm = _ACTIVE["sym2_spectral_norm"]
