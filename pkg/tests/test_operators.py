import json

import numpy as np
import pytest

from fblab.operators import (
    EllipticityBounds,
    EllipticOperator,
    XDependence,
    check_structure,
    evaluate,
    evaluate_on_arrays,
    frobenius,
    linearize,
    linearize_on_arrays,
    load_operator,
    operator_from_dict,
    operator_to_dict,
    pucci_minus,
    pucci_plus,
    x_modulus_beta,
)

B12 = EllipticityBounds(1.0, 2.0)


def admissible_samples(n_theta=100, n_ab=10, lo=1.0, hi=2.0):
    """Rotated-diagonal matrices N with lo I <= N <= hi I."""
    thetas = np.linspace(0.0, np.pi, n_theta, endpoint=False)
    diag = np.linspace(lo, hi, n_ab)
    a, b, t = np.meshgrid(diag, diag, thetas, indexing="ij")
    c, s = np.cos(t), np.sin(t)
    nxx = a * c * c + b * s * s
    nyy = a * s * s + b * c * c
    nxy = (a - b) * c * s
    return nxx.ravel(), nyy.ravel(), nxy.ravel()


def test_pucci_closed_forms_on_known_matrices():
    assert pucci_plus(np.eye(2), B12) == pytest.approx(4.0)
    assert pucci_minus(np.eye(2), B12) == pytest.approx(2.0)
    M = np.diag([1.0, -1.0])
    assert pucci_plus(M, B12) == pytest.approx(2.0 - 1.0)
    assert pucci_minus(M, B12) == pytest.approx(1.0 - 2.0)
    assert pucci_plus(np.zeros((2, 2)), B12) == 0.0


def test_pucci_matches_bruteforce_extremum():
    rng = np.random.default_rng(7)
    nxx, nyy, nxy = admissible_samples()
    for _ in range(25):
        A = rng.standard_normal((2, 2))
        M = 0.5 * (A + A.T)
        traces = nxx * M[0, 0] + nyy * M[1, 1] + 2.0 * nxy * M[0, 1]
        assert pucci_plus(M, B12) >= traces.max() - 1e-12
        assert pucci_minus(M, B12) <= traces.min() + 1e-12
        assert pucci_plus(M, B12) == pytest.approx(traces.max(), abs=1e-3)
        assert pucci_minus(M, B12) == pytest.approx(traces.min(), abs=1e-3)


def test_bounds_validation():
    with pytest.raises(ValueError):
        EllipticityBounds(0.0, 1.0)
    with pytest.raises(ValueError):
        EllipticityBounds(2.0, 1.0)
    with pytest.raises(ValueError):
        XDependence(cbar=1.0, alphabar=1.5)


def test_bellman_family_must_sit_inside_bounds():
    with pytest.raises(ValueError):
        EllipticOperator("bellman-min", B12, matrices=(np.diag([0.5, 1.0]),))
    op = EllipticOperator("bellman-min", B12,
                          matrices=(np.eye(2), np.diag([2.0, 1.0])))
    M = np.diag([1.0, 0.0])
    # min(tr(M), 2*M11 + M22) = min(1, 2) = 1
    assert evaluate(op, M) == pytest.approx(1.0)


def test_linearize_reproduces_value():
    ops = [
        EllipticOperator("linear-trace", B12),
        EllipticOperator("pucci-plus", B12),
        EllipticOperator("pucci-minus", B12),
        EllipticOperator("bellman-min", B12,
                         matrices=(np.eye(2), np.diag([2.0, 1.0]))),
        EllipticOperator("custom-table", B12, table=np.diag([1.0, 2.0])),
    ]
    rng = np.random.default_rng(3)
    for op in ops:
        for _ in range(20):
            A = rng.standard_normal((2, 2))
            M = 0.5 * (A + A.T)
            L = linearize(op, M)
            # all supported kinds satisfy F(M) = tr(L(M) M) exactly
            assert np.trace(L @ M) == pytest.approx(evaluate(op, M), abs=1e-12)
            w = np.linalg.eigvalsh(L)
            assert w.min() >= 1.0 - 1e-9 and w.max() <= 2.0 + 1e-9


def test_linearize_tie_rules():
    op = EllipticOperator("pucci-plus", B12)
    L = linearize(op, np.zeros((2, 2)))
    assert np.allclose(L, 2.0 * np.eye(2))  # tied block takes the upper weight
    bell = EllipticOperator("bellman-min", B12, matrices=(np.eye(2), np.eye(2)))
    # tied policies resolve to the lowest index
    assert np.allclose(linearize(bell, np.eye(2)), np.eye(2))


def test_array_evaluation_matches_scalar():
    rng = np.random.default_rng(11)
    hxx = rng.standard_normal(40)
    hyy = rng.standard_normal(40)
    hxy = rng.standard_normal(40)
    for kind, kw in [("pucci-plus", {}), ("pucci-minus", {}),
                     ("bellman-min", {"matrices": (np.eye(2), np.diag([2.0, 1.0]))}),
                     ("custom-table", {"table": np.array([[1.5, 0.25], [0.25, 1.5]])})]:
        op = EllipticOperator(kind, B12, **kw)
        vals = evaluate_on_arrays(op, hxx, hyy, hxy)
        lxx, lyy, lxy = linearize_on_arrays(op, hxx, hyy, hxy)
        for k in range(40):
            M = np.array([[hxx[k], hxy[k]], [hxy[k], hyy[k]]])
            assert vals[k] == pytest.approx(evaluate(op, M), abs=1e-10)
            recon = lxx[k] * hxx[k] + lyy[k] * hyy[k] + 2.0 * lxy[k] * hxy[k]
            assert recon == pytest.approx(vals[k], abs=1e-9)


def test_structure_check_passes_for_elliptic_kinds():
    for kind, kw in [("linear-trace", {}), ("pucci-minus", {}),
                     ("bellman-min", {"matrices": (np.eye(2), np.diag([2.0, 1.0]))})]:
        rep = check_structure(EllipticOperator(kind, B12, **kw), samples=200, seed=1)
        assert rep.passed, rep.checks
    assert check_structure(EllipticOperator("linear-trace", B12), 50, 0).concavity == "linear"
    assert check_structure(EllipticOperator("pucci-minus", B12), 50, 0).concavity == "concave"
    assert check_structure(EllipticOperator("pucci-plus", B12), 50, 0).concavity == "convex"


def test_structure_check_fails_with_witness_for_indefinite_table():
    op = EllipticOperator("custom-table", B12, table=np.diag([1.0, -1.0]))
    rep = check_structure(op, samples=200, seed=0)
    assert not rep.passed
    chk = rep.checks["pucci_sandwich"]
    assert not chk["passed"]
    w = chk["witness"]
    D = np.array(w["M"]) - np.array(w["N"])
    # witness reproduces the violation against the closed-form bounds
    diff = evaluate(op, np.array(w["M"]), w["x"]) - evaluate(op, np.array(w["N"]), w["x"])
    assert diff < pucci_minus(D, B12) - 1e-9 or diff > pucci_plus(D, B12) + 1e-9


def test_x_dependence_modulus():
    op0 = EllipticOperator("linear-trace", B12)
    assert x_modulus_beta(op0, (0.3, 0.1), (0.0, 0.0), samples=16) == 0.0
    xd = XDependence(cbar=2.0, alphabar=0.5, scale=1.0)
    op = EllipticOperator("linear-trace", B12, x_dep=xd)
    x = (0.36, 0.0)
    target = np.sqrt(2.0) * 0.6  # sup_M |tr M| / (|M|_F + 1) * |x|^0.5
    b256 = x_modulus_beta(op, x, (0.0, 0.0), samples=256, seed=5)
    b512 = x_modulus_beta(op, x, (0.0, 0.0), samples=512, seed=5)
    assert b256 <= b512 <= target + 1e-9
    assert b512 >= 0.9 * target
    rep = check_structure(op, samples=300, seed=2)
    assert rep.checks["x_holder"]["passed"]


def test_json_round_trip(tmp_path):
    op = EllipticOperator("bellman-min", B12,
                          matrices=(np.eye(2), np.diag([2.0, 1.0])),
                          x_dep=XDependence(cbar=3.0, alphabar=0.5, scale=0.25))
    d = operator_to_dict(op)
    back = operator_from_dict(json.loads(json.dumps(d)))
    assert back.kind == op.kind
    assert back.bounds == op.bounds
    assert all(np.array_equal(a, b) for a, b in zip(back.matrices, op.matrices))
    assert back.x_dep == op.x_dep
    p = tmp_path / "op.json"
    p.write_text(json.dumps(d))
    assert load_operator(p).kind == "bellman-min"
    with pytest.raises(ValueError):
        operator_from_dict({"kind": "linear-trace"})


def test_frobenius_and_symmetry_guard():
    assert frobenius(np.eye(2)) == pytest.approx(np.sqrt(2.0))
    with pytest.raises(ValueError):
        evaluate(EllipticOperator("linear-trace", B12), np.array([[0.0, 1.0], [0.0, 0.0]]))
