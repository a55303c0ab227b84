"""Fully nonlinear uniformly elliptic operators acting on symmetric matrices.

Supported kinds:

* ``linear-trace``    F(M) = tr(M)
* ``pucci-plus``      maximal Pucci extremal operator for bounds (lambda0, lambda1)
* ``pucci-minus``     minimal Pucci extremal operator
* ``bellman-min``     F(M) = min_i tr(A_i M) over a finite coefficient family
* ``custom-table``    F(M) = tr(C M) for a user-supplied coefficient matrix C

An optional x-dependence multiplies the base value by (1 + scale * |x|^alphabar),
which keeps a Hölder modulus in x with exponent alphabar.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._kernels import sym2_eigenvalues

KINDS = ("linear-trace", "pucci-plus", "pucci-minus", "bellman-min", "custom-table")

_TIE_TOL = 1e-9


def validate_symmetric(M, tol: float = 1e-10) -> np.ndarray:
    """Return M as a float array, raising ValueError unless it is square symmetric."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.T).max() > tol * scale:
        raise ValueError("matrix is not symmetric")
    return M


def eigen(M):
    """Eigenvalues (ascending) and orthonormal eigenbasis of a symmetric matrix."""
    M = validate_symmetric(M)
    w, Q = np.linalg.eigh(M)
    return w, Q


def frobenius(M) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(M, dtype=float)))))


@dataclass(frozen=True)
class EllipticityBounds:
    lambda0: float
    lambda1: float

    def __post_init__(self):
        if not (0.0 < self.lambda0 <= self.lambda1):
            raise ValueError(
                f"ellipticity bounds must satisfy 0 < lambda0 <= lambda1, "
                f"got ({self.lambda0}, {self.lambda1})"
            )


@dataclass(frozen=True)
class XDependence:
    """Hölder-in-x descriptor: |F(M,x)-F(M,y)| <= cbar (|M|_F + 1) |x-y|^alphabar."""

    cbar: float
    alphabar: float
    scale: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alphabar <= 1.0):
            raise ValueError("alphabar must lie in (0, 1]")
        if self.cbar < 0.0 or self.scale < 0.0:
            raise ValueError("cbar and scale must be nonnegative")


@dataclass(frozen=True)
class EllipticOperator:
    kind: str
    bounds: EllipticityBounds
    matrices: Optional[tuple] = None  # bellman-min coefficient family
    table: Optional[np.ndarray] = None  # custom-table coefficient matrix
    x_dep: Optional[XDependence] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "bellman-min":
            if not self.matrices:
                raise ValueError("bellman-min requires a nonempty coefficient family")
            fam = tuple(validate_symmetric(A) for A in self.matrices)
            lo, hi = self.bounds.lambda0, self.bounds.lambda1
            for A in fam:
                w = np.linalg.eigvalsh(A)
                if w.min() < lo - 1e-12 or w.max() > hi + 1e-12:
                    raise ValueError(
                        "every bellman-min coefficient matrix must satisfy "
                        "lambda0 I <= A <= lambda1 I"
                    )
                A.setflags(write=False)
            object.__setattr__(self, "matrices", fam)
        if self.kind == "custom-table":
            if self.table is None:
                raise ValueError("custom-table requires a coefficient matrix")
            C = validate_symmetric(self.table)
            C.setflags(write=False)
            object.__setattr__(self, "table", C)

    @property
    def dim(self) -> Optional[int]:
        if self.kind == "bellman-min":
            return self.matrices[0].shape[0]
        if self.kind == "custom-table":
            return self.table.shape[0]
        return None


def _x_factor(op: EllipticOperator, x) -> float:
    if op.x_dep is None or op.x_dep.scale == 0.0 or x is None:
        return 1.0
    r = float(np.linalg.norm(np.asarray(x, dtype=float)))
    return 1.0 + op.x_dep.scale * r ** op.x_dep.alphabar


def pucci_plus(M, bounds: EllipticityBounds) -> float:
    """sup of tr(N M) over lambda0 I <= N <= lambda1 I."""
    w, _ = eigen(M)
    return float(bounds.lambda1 * w[w > 0].sum() + bounds.lambda0 * w[w < 0].sum())


def pucci_minus(M, bounds: EllipticityBounds) -> float:
    """inf of tr(N M) over lambda0 I <= N <= lambda1 I."""
    w, _ = eigen(M)
    return float(bounds.lambda0 * w[w > 0].sum() + bounds.lambda1 * w[w < 0].sum())


def _base_value(op: EllipticOperator, M: np.ndarray) -> float:
    if op.kind == "linear-trace":
        return float(np.trace(M))
    if op.kind == "pucci-plus":
        return pucci_plus(M, op.bounds)
    if op.kind == "pucci-minus":
        return pucci_minus(M, op.bounds)
    if op.kind == "bellman-min":
        return float(min(np.trace(A @ M) for A in op.matrices))
    return float(np.trace(op.table @ M))


def evaluate(op: EllipticOperator, M, x=None) -> float:
    """F(M, x)."""
    M = validate_symmetric(M)
    if op.dim is not None and M.shape[0] != op.dim:
        raise ValueError(f"dimension mismatch: matrix is {M.shape[0]}d, operator is {op.dim}d")
    return _base_value(op, M) * _x_factor(op, x)


def linearize(op: EllipticOperator, M, tie_tol: float = _TIE_TOL) -> np.ndarray:
    """Coefficient matrix F_ij(M) of the x-independent part of F.

    Satisfies lambda0 I <= F_ij <= lambda1 I.  At eigenvalue ties of the
    extremal kinds, the lambda1 weight is assigned to the tied block; at
    bellman-min policy ties the lowest-index policy is returned.  Either
    choice is a valid subgradient element.
    """
    M = validate_symmetric(M)
    n = M.shape[0]
    lo, hi = op.bounds.lambda0, op.bounds.lambda1
    if op.kind == "linear-trace":
        return np.eye(n)
    if op.kind == "custom-table":
        return np.array(op.table)
    if op.kind == "bellman-min":
        vals = np.array([np.trace(A @ M) for A in op.matrices])
        return np.array(op.matrices[int(np.argmin(vals))])
    w, Q = np.linalg.eigh(M)
    if op.kind == "pucci-plus":
        weights = np.where(w > tie_tol, hi, np.where(w < -tie_tol, lo, hi))
    else:
        weights = np.where(w > tie_tol, lo, np.where(w < -tie_tol, hi, hi))
    return (Q * weights) @ Q.T


# ---------------------------------------------------------------------------
# vectorized 2D evaluation for grid fields
# ---------------------------------------------------------------------------

def evaluate_on_arrays(op: EllipticOperator, hxx, hyy, hxy, x1=None, x2=None):
    """F applied entrywise to 2x2 Hessian component arrays."""
    lo, hi = op.bounds.lambda0, op.bounds.lambda1
    if op.kind == "linear-trace":
        out = hxx + hyy
    elif op.kind == "custom-table":
        C = op.table
        out = C[0, 0] * hxx + 2.0 * C[0, 1] * hxy + C[1, 1] * hyy
    elif op.kind == "bellman-min":
        vals = [A[0, 0] * hxx + 2.0 * A[0, 1] * hxy + A[1, 1] * hyy for A in op.matrices]
        out = np.minimum.reduce(vals)
    else:
        wlo, whi = sym2_eigenvalues(np.asarray(hxx, float), np.asarray(hyy, float), np.asarray(hxy, float))
        if op.kind == "pucci-plus":
            out = hi * np.maximum(wlo, 0) + lo * np.minimum(wlo, 0)
            out = out + hi * np.maximum(whi, 0) + lo * np.minimum(whi, 0)
        else:
            out = lo * np.maximum(wlo, 0) + hi * np.minimum(wlo, 0)
            out = out + lo * np.maximum(whi, 0) + hi * np.minimum(whi, 0)
    if op.x_dep is not None and op.x_dep.scale > 0.0 and x1 is not None:
        r = np.hypot(x1, x2)
        out = out * (1.0 + op.x_dep.scale * r ** op.x_dep.alphabar)
    return out


def linearize_on_arrays(op: EllipticOperator, hxx, hyy, hxy, tie_tol: float = _TIE_TOL):
    """Per-node coefficient matrices (Lxx, Lyy, Lxy) for 2x2 Hessian arrays."""
    hxx = np.asarray(hxx, float)
    hyy = np.asarray(hyy, float)
    hxy = np.asarray(hxy, float)
    lo, hi = op.bounds.lambda0, op.bounds.lambda1
    if op.kind == "linear-trace":
        one = np.ones_like(hxx)
        return one, one, np.zeros_like(hxx)
    if op.kind == "custom-table":
        C = op.table
        shape = np.broadcast(hxx, hyy).shape
        return (np.full(shape, C[0, 0]), np.full(shape, C[1, 1]), np.full(shape, C[0, 1]))
    if op.kind == "bellman-min":
        vals = np.stack(
            [A[0, 0] * hxx + 2.0 * A[0, 1] * hxy + A[1, 1] * hyy for A in op.matrices]
        )
        idx = np.argmin(vals, axis=0)
        fam = np.array(op.matrices)
        return fam[idx, 0, 0], fam[idx, 1, 1], fam[idx, 0, 1]
    # extremal kinds: L = m I + k (c sigma_z + s sigma_x) on the eigenbasis
    wlo, whi = sym2_eigenvalues(hxx, hyy, hxy)

    def weight(w):
        if op.kind == "pucci-plus":
            return np.where(w > tie_tol, hi, np.where(w < -tie_tol, lo, hi))
        return np.where(w > tie_tol, lo, np.where(w < -tie_tol, hi, hi))

    w_lo_c = weight(wlo)
    w_hi_c = weight(whi)
    c = 0.5 * (hxx - hyy)
    s = hxy
    d = np.hypot(c, s)
    m = 0.5 * (w_lo_c + w_hi_c)
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(d > tie_tol, (w_hi_c - w_lo_c) / (2.0 * np.where(d > tie_tol, d, 1.0)), 0.0)
    lxx = m + k * c
    lyy = m - k * c
    lxy = k * s
    return lxx, lyy, lxy


# ---------------------------------------------------------------------------
# structural validation
# ---------------------------------------------------------------------------

@dataclass
class StructureReport:
    seed: int
    samples: int
    dim: int
    checks: dict = field(default_factory=dict)
    concavity: str = "unknown"

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "samples": self.samples,
            "dim": self.dim,
            "concavity": self.concavity,
            "passed": self.passed,
            "checks": self.checks,
        }


def _random_sym(rng, n, scale=1.0):
    A = rng.standard_normal((n, n)) * scale
    return 0.5 * (A + A.T)


def _random_halfdisk_point(rng):
    while True:
        p = rng.uniform([-1.0, 0.0], [1.0, 1.0])
        if p[0] ** 2 + p[1] ** 2 < 1.0:
            return p


def check_structure(op: EllipticOperator, samples: int, seed: int,
                    dim: int = 2, tol: float = 1e-9) -> StructureReport:
    """Sampled validation of the structural hypotheses.

    Checks, on `samples` seeded random matrix pairs and half-disk points:
    zero-at-zero, the two-sided Pucci sandwich, midpoint concavity or
    convexity, and (when x-dependence is present) the Hölder-in-x bound.
    Violations beyond `tol` flag the corresponding check as failed;
    no exception is raised.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    rep = StructureReport(seed=seed, samples=samples, dim=dim)

    # zero at zero
    worst_h1 = 0.0
    for _ in range(min(samples, 16)):
        x = _random_halfdisk_point(rng)
        worst_h1 = max(worst_h1, abs(evaluate(op, np.zeros((dim, dim)), x)))
    rep.checks["zero_at_zero"] = {"passed": worst_h1 <= tol, "worst": worst_h1}

    # Pucci sandwich and midpoint concavity/convexity
    sandwich_margin = np.inf
    sandwich_witness = None
    conc_margin = np.inf
    conv_margin = np.inf
    for _ in range(samples):
        scale = 10.0 ** rng.uniform(-1, 1)
        M = _random_sym(rng, dim, scale)
        N = _random_sym(rng, dim, scale)
        x = _random_halfdisk_point(rng)
        diff = evaluate(op, M, x) - evaluate(op, N, x)
        lob = pucci_minus(M - N, op.bounds)
        hib = pucci_plus(M - N, op.bounds)
        m = min(diff - lob, hib - diff)
        if m < sandwich_margin:
            sandwich_margin = m
            if m < -tol:
                sandwich_witness = {"M": M.tolist(), "N": N.tolist(), "x": x.tolist(),
                                    "difference": diff, "pucci_minus": lob, "pucci_plus": hib}
        mid = evaluate(op, 0.5 * (M + N), x)
        avg = 0.5 * (evaluate(op, M, x) + evaluate(op, N, x))
        conc_margin = min(conc_margin, mid - avg)
        conv_margin = min(conv_margin, avg - mid)
    check = {"passed": sandwich_margin >= -tol, "worst": float(sandwich_margin)}
    if sandwich_witness is not None:
        check["witness"] = sandwich_witness
    rep.checks["pucci_sandwich"] = check

    concave_ok = conc_margin >= -tol
    convex_ok = conv_margin >= -tol
    if concave_ok and convex_ok:
        rep.concavity = "linear"
    elif concave_ok:
        rep.concavity = "concave"
    elif convex_ok:
        rep.concavity = "convex"
    else:
        rep.concavity = "neither"
    rep.checks["concavity_or_convexity"] = {
        "passed": concave_ok or convex_ok,
        "worst": float(max(min(conc_margin, 0.0), min(conv_margin, 0.0))),
    }

    if op.x_dep is not None and op.x_dep.scale > 0.0:
        holder_margin = np.inf
        for _ in range(samples):
            M = _random_sym(rng, dim, 10.0 ** rng.uniform(-1, 2))
            x = _random_halfdisk_point(rng)
            y = _random_halfdisk_point(rng)
            lhs = abs(evaluate(op, M, x) - evaluate(op, M, y))
            rhs = op.x_dep.cbar * (frobenius(M) + 1.0) * np.linalg.norm(x - y) ** op.x_dep.alphabar
            holder_margin = min(holder_margin, rhs - lhs)
        rep.checks["x_holder"] = {"passed": holder_margin >= -tol, "worst": float(holder_margin)}

    return rep


def x_modulus_beta(op: EllipticOperator, x, x0, samples: int, seed: int = 0) -> float:
    """Sampled sup over M of |F(M,x) - F(M,x0)| / (|M|_F + 1).

    Returns exactly 0 for x-independent operators.  With a fixed seed the
    estimate is nondecreasing in `samples` (later draws extend the stream).
    """
    if op.x_dep is None or op.x_dep.scale == 0.0:
        return 0.0
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if np.array_equal(x, x0):
        return 0.0
    rng = np.random.default_rng(seed)
    dim = op.dim or 2
    best = 0.0
    for k in range(samples):
        t = 10.0 ** rng.uniform(-1.0, 6.0)
        S = _random_sym(rng, dim)
        nrm = frobenius(S)
        if nrm == 0.0:
            continue
        M = (t / nrm) * S
        val = abs(evaluate(op, M, x) - evaluate(op, M, x0)) / (frobenius(M) + 1.0)
        best = max(best, val)
    return best


# ---------------------------------------------------------------------------
# JSON document interface
# ---------------------------------------------------------------------------

def operator_to_dict(op: EllipticOperator) -> dict:
    d = {"kind": op.kind, "lambda0": op.bounds.lambda0, "lambda1": op.bounds.lambda1}
    if op.matrices is not None:
        d["matrices"] = [A.tolist() for A in op.matrices]
    if op.table is not None:
        d["table"] = op.table.tolist()
    if op.x_dep is not None:
        d["x_dependence"] = {
            "cbar": op.x_dep.cbar,
            "alphabar": op.x_dep.alphabar,
            "scale": op.x_dep.scale,
        }
    return d


def operator_from_dict(d: dict) -> EllipticOperator:
    try:
        kind = d["kind"]
        bounds = EllipticityBounds(float(d["lambda0"]), float(d["lambda1"]))
    except KeyError as e:
        raise ValueError(f"operator document is missing required field {e.args[0]!r}") from e
    xd = None
    if "x_dependence" in d and d["x_dependence"] is not None:
        raw = d["x_dependence"]
        xd = XDependence(
            cbar=float(raw["cbar"]),
            alphabar=float(raw["alphabar"]),
            scale=float(raw.get("scale", 1.0)),
        )
    matrices = d.get("matrices")
    if matrices is not None:
        matrices = tuple(np.array(A, dtype=float) for A in matrices)
    table = d.get("table")
    if table is not None:
        table = np.array(table, dtype=float)
    return EllipticOperator(kind=kind, bounds=bounds, matrices=matrices, table=table, x_dep=xd)


def load_operator(path) -> EllipticOperator:
    with open(path, "r", encoding="utf-8") as f:
        return operator_from_dict(json.load(f))
