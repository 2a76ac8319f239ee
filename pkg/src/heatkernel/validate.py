"""Compare structural estimates with the numerical oracle.

A comparison sample is a list of oracle values and matching
:class:`~heatkernel.estimator.EstimateValue` objects.  :func:`fit_and_band`
fits the free constants ``C`` and ``b`` and reports how tightly the ratio
oracle / fitted estimate is confined.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import estimator as est
from .errors import DomainError, FitError
from .geometry import E_OFFSET, Point, SumSpec, volume_ball
from .oracle import (
    R_A,
    Domain,
    StarGrid,
    StepConfig,
    build_grid,
    gamma_in_domain,
    heat_kernel,
    resolvent,
    resolvent_floor,
)

BAND_LIMIT = 8.0
SLOPE_TOL = 0.1
MIN_SAMPLES = 20
MIN_DECADES = 1.5


@dataclass
class Sample:
    t: float
    abs_x: float | None
    abs_y: float | None
    oracle: float
    estimate: est.EstimateValue


@dataclass
class FitReport:
    scenario: str
    case: str
    C: float
    b: float | None
    ratio_band: tuple
    slope: float
    slope_se: float
    slope_target: float | None
    slope_tol: float
    band_limit: float
    ratios: np.ndarray
    samples: list
    outliers: list = field(default_factory=list)

    @property
    def band(self) -> float:
        return self.ratio_band[1] / self.ratio_band[0]

    @property
    def band_ok(self) -> bool:
        return self.band <= self.band_limit

    @property
    def slope_ok(self) -> bool:
        return self.slope_target is None or abs(self.slope - self.slope_target) <= self.slope_tol

    @property
    def passed(self) -> bool:
        return self.band_ok and self.slope_ok

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "fail"

    def summary(self) -> str:
        b = "-" if self.b is None else f"{self.b:.3g}"
        line = f"{self.scenario:>8} {self.case:<14} n={len(self.samples):<3} C={self.C:.3g} b={b} band={self.band:.3g}"
        if self.slope_target is not None:
            line += f" slope={self.slope:.3f}+-{self.slope_se:.3f} (target {self.slope_target:g})"
        return f"{line} {self.verdict.upper()}"


def loglog_slope(t, p) -> tuple[float, float]:
    """OLS slope of ``log p`` against ``log t`` and its standard error."""
    x, y = np.log(np.asarray(t, float)), np.log(np.asarray(p, float))
    n = x.size
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise FitError("all samples share one time")
    slope = float(xc @ (y - y.mean())) / sxx
    if n <= 2:
        return slope, math.nan
    resid = y - y.mean() - slope * xc
    return slope, math.sqrt(float(resid @ resid) / (n - 2) / sxx)


def fit_and_band(
    oracle,
    estimates,
    t,
    abs_x=None,
    abs_y=None,
    band_limit: float = BAND_LIMIT,
    slope_target: float | None = None,
    slope_tol: float = SLOPE_TOL,
    scenario: str = "",
    case: str = "",
    min_samples: int = MIN_SAMPLES,
) -> FitReport:
    """Fit ``C`` and ``b`` and summarise the ratio band.

    ``b`` is the least-squares slope of ``log(oracle/structural)`` against the
    Gaussian exponent (absent when the exponent does not vary); ``C`` is then
    the median of the remaining ratio.  Ratios outside ``sqrt(band_limit)``
    of the median are flagged, never dropped.
    """
    oracle = np.asarray(oracle, dtype=float)
    t = np.asarray(t, dtype=float)
    n = oracle.size
    if len(estimates) != n or t.size != n:
        raise FitError("oracle, estimates and t must have equal length")
    if n < min_samples:
        raise FitError(f"need at least {min_samples} samples, got {n}")
    if np.all(t == t[0]):
        raise FitError("degenerate sample: all times are equal")
    if math.log10(t.max() / t.min()) < MIN_DECADES - 1e-9:
        raise FitError(f"samples must span at least {MIN_DECADES} decades of t")
    if np.any(~(oracle > 0)):
        raise FitError("oracle values must be positive")
    struct = np.array([e.structural for e in estimates])
    gexp = np.array([e.gauss_exponent for e in estimates])
    logr = np.log(oracle / struct)
    b = None
    if np.ptp(gexp) > 1e-12 * max(1.0, gexp.max()):
        gc = gexp - gexp.mean()
        b = -float(gc @ (logr - logr.mean())) / float(gc @ gc)
    core = logr + (b * gexp if b is not None else 0.0)
    C = float(np.exp(np.median(core)))
    ratios = np.exp(core) / C
    slope, se = loglog_slope(t, oracle)
    lim = math.sqrt(band_limit)
    outliers = [int(i) for i in np.flatnonzero((ratios > lim) | (ratios < 1 / lim))]
    ax = [None] * n if abs_x is None else list(abs_x)
    ay = [None] * n if abs_y is None else list(abs_y)
    samples = [Sample(float(t[i]), ax[i], ay[i], float(oracle[i]), estimates[i]) for i in range(n)]
    return FitReport(
        scenario=scenario,
        case=case,
        C=C,
        b=b,
        ratio_band=(float(ratios.min()), float(ratios.max())),
        slope=slope,
        slope_se=se,
        slope_target=slope_target,
        slope_tol=slope_tol,
        band_limit=band_limit,
        ratios=ratios,
        samples=samples,
        outliers=outliers,
    )


# ---------------------------------------------------------------------------
# resolvent checks


@dataclass
class BoundCheck:
    name: str
    kind: str  # "band", "lower" or "upper"
    lambdas: np.ndarray
    values: np.ndarray
    band_limit: float
    skipped: tuple = ()
    r_A: float | None = None
    end: int | None = None

    @property
    def band(self) -> float:
        if self.values.size == 0:
            return math.nan
        return float(self.values.max() / self.values.min())

    @property
    def passed(self) -> bool:
        return self.values.size >= 2 and bool(np.all(self.values > 0)) and self.band <= self.band_limit

    def summary(self) -> str:
        where = "" if self.r_A is None else f" r_A={self.r_A:g} end={self.end}"
        skip = f" ({len(self.skipped)} lambda skipped)" if self.skipped else ""
        return f"{self.name}{where}: band={self.band:.3g} {'PASS' if self.passed else 'FAIL'}{skip}"


@dataclass
class ResolventReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def get(self, name: str, r_A=None, end=None) -> BoundCheck:
        for c in self.checks:
            if c.name == name and (r_A is None or c.r_A == r_A) and (end is None or c.end == end):
                return c
        raise KeyError(name)


def _safe_lambdas(grid: StarGrid, lambda_grid):
    lams = np.sort(np.asarray(lambda_grid, dtype=float))[::-1]
    floor = resolvent_floor(grid)
    ok = lams[lams >= floor]
    skipped = tuple(float(v) for v in lams[lams < floor])
    if skipped:
        warnings.warn(f"{len(skipped)} lambda values below the safe floor {floor:g} were skipped", stacklevel=3)
    return ok, skipped


def check_resolvent_bounds(
    grid: StarGrid,
    lambda_grid,
    r_A=(R_A, 3 * R_A),
    band_limit: float = BAND_LIMIT,
) -> ResolventReport:
    """Band checks for the small-``lambda`` size of the resolvent quantities.

    Checks at the probe ring ``r_A`` only use ``lambda <= 1 / r_A^2``, the range
    in which those bounds are claimed; the rest are recorded as skipped.
    """
    s = grid.sum
    lams, skipped = _safe_lambdas(grid, lambda_grid)
    samples = resolvent(grid, lams)
    gamma = np.array([r.gamma[0] for r in samples])
    gamma_dot = np.array([r.gamma_dot[0] for r in samples])
    checks = []
    if s.all_subcritical:
        vmax = np.array([float(s.v_max(1 / math.sqrt(v))) for v in lams])
        checks.append(BoundCheck("lambda*gamma*Vmax", "band", lams, lams * gamma * vmax, band_limit, skipped))
    if s.has_critical:
        checks.append(BoundCheck("gamma/log(1/lambda)", "band", lams, gamma / np.log(1 / lams), band_limit, skipped))
        checks.append(BoundCheck("lambda*gamma_dot", "upper", lams, lams * gamma_dot, band_limit, skipped))
    for ra in np.atleast_1d(r_A):
        ra = float(ra)
        sel = lams <= 1 / ra**2
        skip = skipped + tuple(float(v) for v in lams[~sel])
        lam_a = lams[sel]
        for i, e in enumerate(s.ends):
            c = grid.cell_of(i, ra)
            phi = np.array([r.phi[c] for r, m in zip(samples, sel) if m])
            psi = np.array([r.psi_big[c] for r, m in zip(samples, sel) if m])
            if e.is_subcritical:
                q = phi / (lam_a * volume_ball(e, 1 / np.sqrt(lam_a)))
                checks.append(BoundCheck("Phi/(lambda*V)", "lower", lam_a, q, band_limit, skip, ra, i))
            elif e.is_critical:
                q = phi * np.log(1 / lam_a)
                checks.append(BoundCheck("Phi*log(1/lambda)", "lower", lam_a, q, band_limit, skip, ra, i))
            q = lam_a * np.log(1 / lam_a) ** 2 * psi
            checks.append(BoundCheck("lambda*log^2*Psi", "upper", lam_a, q, band_limit, skip, ra, i))
    return ResolventReport(checks)


@dataclass
class GluingReport:
    lambdas: np.ndarray
    ratio: np.ndarray
    r_A: float
    band_limit: float

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.ratio)) and self.ratio.max() / self.ratio.min() <= self.band_limit)


def check_gluing_inequality(grid: StarGrid, lambda_grid, r_A: float = R_A, band_limit: float = BAND_LIMIT) -> GluingReport:
    """Ratio ``gamma(o) * sum_i Phi^{E_i}(r_A) / gamma^A(o)`` with ``A`` the ball of radius ``r_A``."""
    lams, _ = _safe_lambdas(grid, lambda_grid)
    samples = resolvent(grid, lams)
    A = Domain.ball(r_A)
    ratio = []
    for lam, r in zip(lams, samples):
        phis = sum(r.phi[grid.cell_of(i, r_A)] for i in range(grid.k))
        ratio.append(r.gamma[0] * phis / gamma_in_domain(grid, lam, A)[0])
    return GluingReport(lams, np.array(ratio), r_A, band_limit)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class CaseSpec:
    """One comparison: where the two points sit as a function of ``t``.

    ``x`` and ``y`` are ``(end, rule)`` pairs with ``end=None`` for the centre
    and ``rule`` either a fixed ``|x|`` or the string ``"sqrt_t"`` times a
    factor, e.g. ``(1, ("sqrt_t", 0.5))``.
    """

    name: str
    x: tuple
    ys: tuple
    t_lo: float
    t_hi: float
    n_t: int
    kind: str = "kernel"  # "kernel", "diagonal" or "medium"
    slope_target: float | None = None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    alphas: tuple
    cases: tuple
    R_max: float
    n_cells: int = 3000
    spacing_ratio: float = 1.002
    band_limit: float = BAND_LIMIT
    slope_tol: float = SLOPE_TOL
    steps: StepConfig | None = None
    tabulated: tuple = ()


def _abs_rule(rule, t: float) -> float:
    if isinstance(rule, (tuple, list)):
        tag, f = rule
        if tag != "sqrt_t":
            raise DomainError(f"unknown point rule {tag!r}")
        return max(E_OFFSET, f * math.sqrt(t))
    return float(rule)


def _point(grid: StarGrid, end, rule, t):
    """Snap a requested position to its cell; return ``(cell, Point)``."""
    if end is None:
        return 0, Point.center()
    c = grid.cell_of_abs(end, _abs_rule(rule, t))
    return c, Point.on_end(end, grid.cell_abs(c))


def _t_grid(c: CaseSpec) -> np.ndarray:
    return np.geomspace(c.t_lo, c.t_hi, c.n_t)


def run_case(grid: StarGrid, case: CaseSpec, scenario: str = "", band_limit=BAND_LIMIT, slope_tol=SLOPE_TOL, steps=None) -> FitReport:
    s = grid.sum
    ts = _t_grid(case)
    # group oracle solves by source cell
    plan = []
    for t in ts:
        cx, px = _point(grid, *case.x, t)
        for y in case.ys:
            cy, py = _point(grid, *y, t)
            plan.append((t, cx, px, cy, py))
    by_source = {}
    for k, (t, cx, *_rest) in enumerate(plan):
        by_source.setdefault(cx, []).append(k)
    oracle = np.empty(len(plan))
    for cx, idx in by_source.items():
        times = sorted({plan[k][0] for k in idx})
        ks = heat_kernel(grid, cx, times, steps)
        pos = {tt: n for n, tt in enumerate(times)}
        for k in idx:
            oracle[k] = ks.value(pos[plan[k][0]], plan[k][3])
    estimates = []
    for t, _cx, px, _cy, py in plan:
        if case.kind == "diagonal":
            estimates.append(est.on_diagonal(s, t))
        elif case.kind == "medium":
            estimates.append(est.regime_estimate(s, est.TimeRegime.Medium, t, ends=(px.end, py.end)))
        else:
            estimates.append(est.kernel_estimate(s, px, py, t))
    return fit_and_band(
        oracle,
        estimates,
        [p[0] for p in plan],
        abs_x=[None if p[2].is_center else p[2].abs for p in plan],
        abs_y=[None if p[4].is_center else p[4].abs for p in plan],
        band_limit=band_limit,
        slope_target=case.slope_target,
        slope_tol=slope_tol,
        scenario=scenario,
        case=case.name,
    )


def _sqrt(f):
    return ("sqrt_t", f)


_FAR = tuple(_sqrt(f) for f in (0.1, 0.3, 0.6, 1.0, 2.0))
_NEAR = tuple(_sqrt(f) for f in (0.1, 0.25, 0.5, 0.75, 1.0))
_OUT = tuple(_sqrt(f) for f in (1.05, 1.5, 2.0, 3.0))


def _diag(slope):
    return CaseSpec("OnDiagonal", (None, 0), ((None, 0),), 1e2, 1e4, 21, "diagonal", slope)


def _medium(name, i, j):
    return CaseSpec(name, (i, _sqrt(1.0)), ((j, _sqrt(1.0)),), 1e2, 1e5, 21, "medium")


SCENARIOS = {
    "r1r2": ScenarioSpec(
        "r1r2",
        (1.0, 2.0),
        (
            _diag(-1.0),
            CaseSpec("T1_ii3", (0, 10.0), tuple((1, y) for y in _NEAR), 1e2, 1e4, 9),
            _medium("T1_ii3/Medium", 0, 1),
            CaseSpec("T2_a", (0, _sqrt(2.0)), tuple((0, y) for y in _OUT), 1e2, 1e4, 7),
            CaseSpec("T2_b", (1, 10.0), tuple((1, y) for y in _FAR), 1e2, 1e4, 7),
            CaseSpec("T3_ii", (0, 10.0), tuple((0, y) for y in _FAR), 1e2, 1e4, 7),
        ),
        R_max=2000.0,
    ),
    "r2r2": ScenarioSpec(
        "r2r2",
        (2.0, 2.0),
        (
            _diag(-1.0),
            CaseSpec("T1_ii2", (0, 10.0), tuple((1, y) for y in _FAR), 1e2, 1e4, 7),
            _medium("T1_ii2/Medium", 0, 1),
            CaseSpec("T2_b", (0, 10.0), tuple((0, y) for y in _FAR), 1e2, 1e4, 7),
        ),
        R_max=2000.0,
    ),
    "ra1ra2": ScenarioSpec(
        "ra1ra2",
        (1.0, 1.5),
        (
            _diag(-0.75),
            CaseSpec("T1_i", (0, 10.0), tuple((1, y) for y in _FAR), 1e2, 1e4, 7),
            _medium("T1_i/Medium", 0, 1),
            CaseSpec("T2_a", (0, _sqrt(2.0)), tuple((0, y) for y in _OUT), 1e2, 1e4, 7),
            CaseSpec("T2_b", (1, 10.0), tuple((1, y) for y in _FAR), 1e2, 1e4, 7),
            CaseSpec("T3_i", (0, 10.0), tuple((0, y) for y in _FAR), 1e2, 1e4, 7),
        ),
        R_max=2000.0,
    ),
    "r1r1r2": ScenarioSpec(
        "r1r1r2",
        (1.0, 1.0, 2.0),
        (
            _diag(-1.0),
            CaseSpec("T1_ii1", (0, 10.0), tuple((1, y) for y in _FAR), 1e2, 1e4, 7),
            _medium("T1_ii1/Medium", 0, 1),
            CaseSpec("T1_ii3", (0, 10.0), tuple((2, y) for y in _NEAR), 1e2, 1e4, 7),
            CaseSpec("T3_ii", (0, 10.0), tuple((0, y) for y in _FAR), 1e2, 1e4, 7),
        ),
        R_max=2000.0,
    ),
}

THEOREMS = tuple(t.value for t in est.Theorem)


@dataclass
class SuiteResult:
    scenario: str
    reports: list
    coverage: dict

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def coverage_matrix(reports) -> dict:
    """Theorem branch -> number of samples that exercised it."""
    cov = {name: 0 for name in THEOREMS}
    for r in reports:
        for s in r.samples:
            if s.estimate.regime is not None:
                cov[s.estimate.regime.theorem.value] += 1
    return cov


def build_scenario_grid(spec: ScenarioSpec, sum: SumSpec | None = None) -> StarGrid:
    sum = SumSpec.from_alphas(spec.alphas) if sum is None else sum
    t_max = max(c.t_hi for c in spec.cases)
    return build_grid(sum, spec.R_max, spec.n_cells, spec.spacing_ratio, t_max=t_max)


def scenario_suite(name: str, spec: ScenarioSpec | None = None, sum: SumSpec | None = None, band_limit: float | None = None) -> SuiteResult:
    """Run every case of a named scenario; ``custom`` needs an explicit ``spec``."""
    if name == "custom":
        if spec is None:
            raise DomainError("the custom scenario needs a ScenarioSpec")
    elif name in SCENARIOS:
        spec = SCENARIOS[name] if spec is None else spec
    else:
        raise DomainError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS) + ['custom']}")
    grid = build_scenario_grid(spec, sum)
    limit = spec.band_limit if band_limit is None else band_limit
    reports = [run_case(grid, c, spec.name, limit, spec.slope_tol, spec.steps) for c in spec.cases]
    return SuiteResult(spec.name, reports, coverage_matrix(reports))
