import dataclasses
import math

import numpy as np
import pytest

from heatkernel import estimator as est
from heatkernel.errors import DomainError, FitError
from heatkernel.geometry import SumSpec
from heatkernel.oracle import build_grid, heat_kernel
from heatkernel.validate import (
    SCENARIOS,
    THEOREMS,
    build_scenario_grid,
    check_gluing_inequality,
    check_resolvent_bounds,
    fit_and_band,
    loglog_slope,
    run_case,
    scenario_suite,
)

LAMBDAS = np.geomspace(1e-4, 1e-2, 9)


@pytest.fixture(scope="module")
def suites():
    return {name: scenario_suite(name) for name in SCENARIOS}


def _values(p):
    return [est.EstimateValue(float(v)) for v in p]


def test_fit_identity():
    t = np.geomspace(100, 1e4, 25)
    p = 1 / t
    r = fit_and_band(p, _values(p), t)
    assert r.C == pytest.approx(1.0)
    assert r.ratio_band == pytest.approx((1.0, 1.0))
    assert r.b is None and r.passed and r.outliers == []
    assert r.slope == pytest.approx(-1.0)


def test_fit_recovers_gaussian_constant():
    t = np.geomspace(100, 1e4, 30)
    g = np.linspace(0, 5, 30)
    est_vals = [est.EstimateValue(1 / tt, gg) for tt, gg in zip(t, g)]
    oracle = 3.0 / t * np.exp(-0.4 * g)
    r = fit_and_band(oracle, est_vals, t)
    assert r.b == pytest.approx(0.4)
    assert r.C == pytest.approx(3.0)
    assert r.ratio_band[0] <= 1 <= r.ratio_band[1]


def test_outliers_flagged_not_dropped():
    t = np.geomspace(100, 1e4, 25)
    p = 1 / t
    q = p.copy()
    q[3] *= 50
    r = fit_and_band(q, _values(p), t)
    assert r.outliers == [3]
    assert len(r.samples) == 25
    assert r.verdict == "fail"


def test_fit_errors():
    t = np.geomspace(100, 1e4, 25)
    with pytest.raises(FitError):
        fit_and_band(1 / t[:10], _values(1 / t[:10]), t[:10])
    flat = np.full(25, 100.0)
    with pytest.raises(FitError):
        fit_and_band(np.ones(25), _values(np.ones(25)), flat)
    short = np.geomspace(100, 1000, 25)
    with pytest.raises(FitError):
        fit_and_band(1 / short, _values(1 / short), short)
    with pytest.raises(FitError):
        fit_and_band(1 / t, _values(1 / t)[:-1], t)


def test_loglog_slope():
    t = np.geomspace(1, 1e3, 10)
    s, se = loglog_slope(t, 5 * t**-0.75)
    assert s == pytest.approx(-0.75) and se == pytest.approx(0, abs=1e-12)


def test_slope_verdict():
    t = np.geomspace(100, 1e4, 25)
    p = t**-0.5
    r = fit_and_band(p, _values(p), t, slope_target=-1.0)
    assert r.band_ok and not r.slope_ok and not r.passed


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenarios_pass(suites, name):
    res = suites[name]
    for r in res.reports:
        assert r.passed, r.summary()
        assert r.ratio_band[0] <= 1 <= r.ratio_band[1]


def test_on_diagonal_slopes(suites):
    for name, target in [("r1r2", -1.0), ("ra1ra2", -0.75)]:
        r = suites[name].reports[0]
        assert r.case == "OnDiagonal"
        assert abs(r.slope - target) <= 0.1


def test_gaussian_cases_fit_positive_b(suites):
    seen = 0
    for res in suites.values():
        for r in res.reports:
            if r.b is not None and r.case in ("T2_a", "T3_i", "T3_ii", "T2_b"):
                assert r.b > 0, r.summary()
                seen += 1
    assert seen >= 3


def test_fitted_b_stable_under_doubling():
    spec = SCENARIOS["r1r2"]
    grid = build_scenario_grid(spec)
    case = next(c for c in spec.cases if c.name == "T2_a")
    a = run_case(grid, case, "r1r2")
    b = run_case(grid, dataclasses.replace(case, n_t=2 * case.n_t), "r1r2")
    assert a.b > 0 and abs(b.b / a.b - 1) <= 0.2


def test_coverage_union(suites):
    total = {k: 0 for k in THEOREMS}
    for res in suites.values():
        for k, v in res.coverage.items():
            total[k] += v
    assert all(v > 0 for v in total.values()), total


def test_bottleneck_sign(suites):
    def trend(name):
        res = suites[name]
        med = next(r for r in res.reports if r.case.endswith("/Medium"))
        grid = build_scenario_grid(SCENARIOS[name])
        ts = [1e2, 1e3, 1e4]
        diag = heat_kernel(grid, 0, ts).at(0)
        by_t = {s.t: s.oracle for s in med.samples}
        pm = [by_t[min(by_t, key=lambda u: abs(math.log(u / t)))] for t in ts]
        return np.diff(np.array(pm) / diag)

    assert np.all(trend("r2r2") < 0)
    assert np.all(trend("r1r1r2") > 0)


def test_determinism(suites):
    again = scenario_suite("r2r2")
    for a, b in zip(suites["r2r2"].reports, again.reports):
        assert a.C == b.C and a.b == b.b and a.slope == b.slope
        assert np.array_equal(a.ratios, b.ratios)


def test_unknown_scenario():
    with pytest.raises(DomainError):
        scenario_suite("nope")
    with pytest.raises(DomainError):
        scenario_suite("custom")


@pytest.fixture(scope="module")
def grid_ra():
    return build_grid(SumSpec.from_alphas((1.0, 1.5)), 2000.0, 3000, 1.002)


def test_resolvent_report_critical(grid_r1r2):
    rep = check_resolvent_bounds(grid_r1r2, LAMBDAS)
    assert rep.get("gamma/log(1/lambda)").passed
    assert rep.get("lambda*gamma_dot").passed
    for ra in (10.0, 30.0):
        assert rep.get("Phi*log(1/lambda)", ra, 1).passed
        assert rep.get("Phi/(lambda*V)", ra, 0).passed
        assert rep.get("lambda*log^2*Psi", ra, 0).passed
    # lambda above 1/r_A^2 is out of range at the outer ring and recorded
    assert len(rep.get("lambda*log^2*Psi", 30.0, 0).skipped) > 0
    assert rep.passed


def test_resolvent_report_subcritical(grid_ra):
    rep = check_resolvent_bounds(grid_ra, LAMBDAS)
    assert rep.get("lambda*gamma*Vmax").passed
    with pytest.raises(KeyError):
        rep.get("gamma/log(1/lambda)")
    assert rep.passed


def test_resolvent_skips_below_floor(grid_r1r2):
    with pytest.warns(UserWarning):
        rep = check_resolvent_bounds(grid_r1r2, np.concatenate(([1e-7], LAMBDAS)))
    assert 1e-7 in rep.get("gamma/log(1/lambda)").skipped


def test_gluing_bounded(grid_r1r2):
    rep = check_gluing_inequality(grid_r1r2, LAMBDAS)
    assert rep.bounded
    r2 = build_grid(SumSpec.from_alphas((2.0, 2.0)), 2000.0, 3000, 1.002)
    assert check_gluing_inequality(r2, LAMBDAS).bounded
