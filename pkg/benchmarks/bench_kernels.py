"""Timing comparison of the numba kernels against the pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--h 0.00390625] [--repeat 20]
"""

import argparse
import time

import numpy as np

from fblab._kernels import NUMBA_IMPLS, NUMPY_IMPLS
from fblab.grid import HalfDiskGrid


def _time(fn, args, repeat):
    fn(*args)  # warm-up (includes jit compilation for the numba flavor)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--h", type=float, default=1 / 256)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    grid = HalfDiskGrid(args.h)
    rng = np.random.default_rng(0)
    vals = np.where(grid.valid, rng.standard_normal((grid.nx, grid.ny)), 0.0)
    vals = np.ascontiguousarray(vals)
    valid = np.ascontiguousarray(grid.valid)
    interior = np.ascontiguousarray(grid.interior)
    pts = np.ascontiguousarray(
        rng.uniform([-0.7, 0.0], [0.7, 0.7], size=(20000, 2)))
    axx = rng.standard_normal((grid.nx, grid.ny))
    ayy = rng.standard_normal((grid.nx, grid.ny))
    axy = rng.standard_normal((grid.nx, grid.ny))

    cases = {
        "gradient": (vals, valid, grid.h),
        "hessian": (vals, interior, grid.h),
        "bilinear": (vals, valid, grid.h, float(grid.x1[0]), float(grid.x2[0]), pts),
        "sym2_eigenvalues": (axx, ayy, axy),
        "sym2_spectral_norm": (axx, ayy, axy),
    }

    print(f"grid h={args.h} ({grid.nx}x{grid.ny}), best of {args.repeat}")
    if NUMBA_IMPLS is None:
        print("numba unavailable; timing numpy kernels only")
    header = f"{'kernel':<20}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}"
    print(header)
    for name, a in cases.items():
        t_np = _time(NUMPY_IMPLS[name], a, args.repeat) * 1e3
        if NUMBA_IMPLS is not None:
            t_nb = _time(NUMBA_IMPLS[name], a, args.repeat) * 1e3
            print(f"{name:<20}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>9.2f}x")
        else:
            print(f"{name:<20}{t_np:>12.3f}{'-':>12}{'-':>9}")


if __name__ == "__main__":
    main()
