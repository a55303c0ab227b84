import numpy as np
import pytest

from fblab.blowup import (
    Alternative,
    BlowupThresholds,
    MProfile,
    QuadraticBlowup,
    RescaleSchedule,
    analyze_blowup,
    classify_blowup,
    fit_halfplane_quadratic,
    m_profile,
    rescale,
    uniqueness_diagnostic,
)
from fblab.grid import HalfDiskGrid, ScalarField
from fblab.operators import EllipticityBounds, EllipticOperator

TRACE = EllipticOperator("linear-trace", EllipticityBounds(1.0, 2.0))

# exact L2 projection of x2^3 onto span{x1 x2, x2^2} over the half disk
B_CUBIC = 256.0 / (105.0 * np.pi)


def test_schedule_validation():
    with pytest.raises(ValueError):
        RescaleSchedule((0.5, 0.5))
    with pytest.raises(ValueError):
        RescaleSchedule((1.5,))
    sched = RescaleSchedule.dyadic(1 / 64)
    assert sched.radii[0] == 0.5
    assert sched.radii[-1] >= 8 / 64


def test_rescale_accuracy_on_quadratics():
    # bilinear sampling carries an O(h^2) error amplified by 1/r^2
    g = HalfDiskGrid(1 / 32)
    u = ScalarField.from_function(g, lambda x, y: x * y + 2.0 * y * y)
    for r, tol in ((0.5, 2e-3), (0.25, 8e-3)):
        v = rescale(u, r, g)
        sel = g.valid & np.isfinite(v.values)
        expect = g.X1[sel] * g.X2[sel] + 2.0 * g.X2[sel] ** 2
        bound = 3.0 * g.h ** 2 / (2.0 * r * r)
        assert tol <= bound  # the stated tolerance is the interpolation bound
        assert np.max(np.abs(v.values[sel] - expect)) < tol


def test_fit_recovers_exact_coefficients():
    g = HalfDiskGrid(1 / 32)
    u = ScalarField.from_function(g, lambda x, y: 0.75 * x * y + 0.5 * y * y)
    fit = fit_halfplane_quadratic(u)
    assert fit.a == pytest.approx(0.75, abs=1e-10)
    assert fit.b == pytest.approx(0.5, abs=1e-10)
    assert fit.residual < 1e-10


def test_fit_of_cubic_matches_projection_oracle():
    g = HalfDiskGrid(1 / 64)
    u = ScalarField.from_function(g, lambda x, y: y ** 3)
    fit = fit_halfplane_quadratic(u)
    assert fit.a == pytest.approx(0.0, abs=1e-8)
    assert fit.b == pytest.approx(B_CUBIC, abs=0.02)
    assert fit.residual > 0.05  # a cubic is not quadratic: flagged by the misfit


def test_m_profile_on_tilted_quadratic():
    g = HalfDiskGrid(1 / 64)
    u = ScalarField.from_function(g, lambda x, y: x * y + 0.5 * y * y)
    prof = m_profile(u, [0.5, 0.25, 0.125])
    assert len(prof.entries) == 3
    for _, val in prof.entries:
        assert val == pytest.approx(1.0, abs=1e-9)  # |d1 u| / x2 = |x2| / x2
    assert prof.m_estimate == pytest.approx(1.0, abs=1e-8)


def test_m_profile_vanishes_for_halfspace_solution():
    g = HalfDiskGrid(1 / 64)
    u = ScalarField.from_function(g, lambda x, y: 0.5 * y * y)
    prof = m_profile(u, [0.5, 0.25, 0.125])
    assert prof.m_estimate <= 1e-10


def test_classification_cases():
    fits = [QuadraticBlowup(0.0, 0.5, 1e-9, r) for r in (0.5, 0.25, 0.125)]
    prof = MProfile(entries=((0.5, 0.0),), m_estimate=0.0, m_smallest=0.0)
    alt, diag = classify_blowup(prof, fits)
    assert alt is Alternative.CASE_I

    fits = [QuadraticBlowup(1.0, 0.5, 1e-9, r) for r in (0.5, 0.25, 0.125)]
    prof = MProfile(entries=((0.5, 1.0),), m_estimate=1.0, m_smallest=1.0)
    alt, _ = classify_blowup(prof, fits)
    assert alt is Alternative.CASE_II

    # large residuals: refuse to classify
    fits = [QuadraticBlowup(0.0, 0.5, 0.3, r) for r in (0.5, 0.25, 0.125)]
    alt, diag = classify_blowup(prof, fits)
    assert alt is Alternative.INDETERMINATE
    assert "reason" in diag

    # slope diagnostic and coefficients disagree
    fits = [QuadraticBlowup(0.0, 0.5, 1e-9, r) for r in (0.5, 0.25, 0.125)]
    prof = MProfile(entries=((0.5, 1.0),), m_estimate=1.0, m_smallest=1.0)
    alt, diag = classify_blowup(prof, fits)
    assert alt is Alternative.INDETERMINATE


def test_uniqueness_diagnostic_checks_pde_value():
    fits = [QuadraticBlowup(1.0, 0.5, 1e-9, r) for r in (0.5, 0.25, 0.125)]
    out = uniqueness_diagnostic(fits, op=TRACE, f_target=1.0)
    assert out["consistent"]
    assert out["pde_value"] == pytest.approx(1.0)  # tr [[0,1],[1,1]] = 1
    assert out["pde_consistent"]
    with pytest.raises(ValueError):
        uniqueness_diagnostic(fits[:2])


def test_analyze_blowup_halfspace_and_tilted():
    g = HalfDiskGrid(1 / 64)
    u = ScalarField.from_function(g, lambda x, y: 0.5 * y * y)
    rep = analyze_blowup(u, op=TRACE)
    assert rep["classification"] == "case-i"
    assert abs(rep["fits"][0]["b"] - 0.5) < 1e-3

    u2 = ScalarField.from_function(g, lambda x, y: x * y + 0.5 * y * y)
    rep2 = analyze_blowup(u2, op=TRACE)
    assert rep2["classification"] == "case-ii"
    assert abs(rep2["fits"][-1]["a"] - 1.0) < 1e-3
    assert rep2["uniqueness"]["pde_consistent"]


def test_gradient_gate_refuses_noncritical_origin():
    g = HalfDiskGrid(1 / 32)
    u = ScalarField.from_function(g, lambda x, y: 0.3 * y + 0.5 * y * y)
    with pytest.raises(ValueError, match="blow-up center rejected"):
        analyze_blowup(u)


def test_thresholds_serialize():
    th = BlowupThresholds()
    d = th.to_dict()
    assert set(d) == {"fit_accept", "m_zero_tol", "a_zero_tol", "uniq_tol", "pde_tol"}
    assert all(v == 0.05 for v in d.values())
