"""Structural two-sided heat kernel estimates on connected sums.

Every estimate is returned as an :class:`EstimateValue`: the structural
function with all constants set to one, plus the Gaussian exponent
``d^2(x, y) / t`` that the bounds multiply by ``exp(-b * exponent)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import CaseMismatchError, DomainError, SmallTimeError, UnsupportedProfileError
from .geometry import (
    E_OFFSET,
    R_RANGE,
    EndSpec,
    Point,
    PowerLaw,
    SumSpec,
    distance,
    h_func,
    integral_s_over_v,
    off_center_volume,
    volume_ball,
)

T_MIN = 4.0
BOUNDARY_PAD = 1.0
T2B_BAND = 4.0
MEDIUM_FACTOR = 2.0


class Theorem(enum.Enum):
    T1_i = "T1_i"
    T1_ii1 = "T1_ii1"
    T1_ii2 = "T1_ii2"
    T1_ii3 = "T1_ii3"
    T2_a = "T2_a"
    T2_b = "T2_b"
    T3_i = "T3_i"
    T3_ii = "T3_ii"
    OnDiagonal = "OnDiagonal"


class TimeRegime(enum.Enum):
    Long = "Long"
    Medium = "Medium"
    Other = "Other"


@dataclass(frozen=True)
class RegimeTag:
    theorem: Theorem
    time_regime: TimeRegime = TimeRegime.Other

    def __str__(self):
        return f"{self.theorem.value}/{self.time_regime.value}"


@dataclass(frozen=True)
class ConstantProfile:
    C_low: float = 1.0
    C_up: float = 1.0
    b_low: float = 1.0
    b_up: float = 1.0

    def __post_init__(self):
        if min(self.C_low, self.C_up, self.b_low, self.b_up) <= 0:
            raise DomainError("constants must be positive")
        if self.C_low > self.C_up or self.b_low < self.b_up:
            raise DomainError("need C_low <= C_up and b_low >= b_up")


@dataclass(frozen=True)
class EstimateValue:
    structural: float
    gauss_exponent: float = 0.0
    regime: RegimeTag | None = None

    def __post_init__(self):
        if not (self.structural > 0 and math.isfinite(self.structural)):
            raise DomainError(f"structural value must be positive and finite, got {self.structural}")
        if not self.gauss_exponent >= 0:
            raise DomainError("gauss_exponent must be nonnegative")

    def value(self, C: float = 1.0, b: float = 1.0) -> float:
        return C * self.structural * math.exp(-b * self.gauss_exponent)

    def lower(self, profile: ConstantProfile) -> float:
        return self.value(profile.C_low, profile.b_low)

    def upper(self, profile: ConstantProfile) -> float:
        return self.value(profile.C_up, profile.b_up)


# ---------------------------------------------------------------------------
# D, U, W


def _check_t(t: float) -> None:
    if not t > 2:
        raise DomainError("D, U and W need t > 2")


def _d_end(end: EndSpec, abs_x: float, t: float) -> float:
    end.require_class()
    st = math.sqrt(t)
    if abs_x > st:
        return 1.0
    return abs_x * abs_x * volume_ball(end, st) / (t * volume_ball(end, abs_x))


def d_func(sum: SumSpec, x: Point, t: float) -> float:
    _check_t(t)
    if x.is_center:
        return 0.0
    return _d_end(sum.end(x.end), x.abs, t)


def _abs_of(x) -> float:
    a = x.abs if isinstance(x, Point) else float(x)
    if a < E_OFFSET * (1 - 1e-12):
        raise DomainError("|x| must be at least e")
    return a


def u_func(x, t: float) -> float:
    """``U(x, t)``; ``x`` is a Point or a value of ``|x|``."""
    _check_t(t)
    a = _abs_of(x)
    st = math.sqrt(t)
    if a > st:
        return 1.0 / math.log(a)
    return math.log(E_OFFSET * st / a) / math.log(st)


def w_func(x, t: float) -> float:
    _check_t(t)
    a = _abs_of(x)
    st = math.sqrt(t)
    if a > st:
        return 1.0
    return math.log(a) / math.log(st)


# ---------------------------------------------------------------------------
# heat kernel


def _check_time(t: float, t_min: float) -> None:
    if not t > t_min:
        raise SmallTimeError(
            f"t={t:g} is in the small-time range t <= {t_min:g}; the Li-Yau estimate applies there"
        )


def _snap(x: Point, pad: float) -> Point:
    if x.is_center or x.abs <= E_OFFSET + pad:
        return Point.center()
    return x


def _ball_around(end: EndSpec, abs_x: float, r: float) -> float:
    """``V_i(x, r)``; closed form for power ends, radial ball mass otherwise."""
    if isinstance(end.profile, PowerLaw):
        return off_center_volume(end, abs_x, r)
    rad = abs_x - E_OFFSET
    lo = rad - r
    hi = volume_ball(end, rad + r)
    return hi - (volume_ball(end, lo) if lo > 0 else 0.0)


def comparable_to_max(sum: SumSpec, i: int, band: float = T2B_BAND, n_points: int = 64) -> bool:
    """Whether ``V_i`` stays within ``band`` of ``V_max`` on the large-radius range."""
    r_hi = R_RANGE[1]
    for e in sum.ends:
        if not isinstance(e.profile, PowerLaw):
            r_hi = min(r_hi, e.profile.r_end)
    r = np.geomspace(min(R_RANGE[0], r_hi / 100), r_hi, n_points)
    return bool(np.max(sum.v_max(r) / volume_ball(sum.end(i), r)) <= band)


def _time_regime(x: Point, y: Point, t: float) -> TimeRegime:
    st = math.sqrt(t)
    if max(x.abs, y.abs) ** 2 <= st:
        return TimeRegime.Long
    if (
        not x.is_center
        and not y.is_center
        and x.end != y.end
        and all(st / MEDIUM_FACTOR <= p.abs <= MEDIUM_FACTOR * st for p in (x, y))
    ):
        return TimeRegime.Medium
    return TimeRegime.Other


def on_diagonal(sum: SumSpec, t: float) -> EstimateValue:
    """Long-time on-diagonal size ``1 / V_max(sqrt t)``."""
    sum.require_classes()
    _check_t(t)
    return EstimateValue(1.0 / float(sum.v_max(math.sqrt(t))), 0.0, RegimeTag(Theorem.OnDiagonal, TimeRegime.Long))


def kernel_estimate(
    sum: SumSpec,
    x: Point,
    y: Point,
    t: float,
    t_min: float = T_MIN,
    boundary_pad: float = BOUNDARY_PAD,
    t2b_band: float = T2B_BAND,
) -> EstimateValue:
    """Dispatch to the off-diagonal estimate for ``x``, ``y`` at time ``t``."""
    sum.require_classes()
    _check_time(t, t_min)
    x, y = _snap(x, boundary_pad), _snap(y, boundary_pad)
    if x.is_center and y.is_center:
        return on_diagonal(sum, t)
    gauss = distance(sum, x, y) ** 2 / t
    tag = _time_regime(x, y, t)
    st = math.sqrt(t)
    log_t = math.log(t)
    Dx, Dy = d_func(sum, x, t), d_func(sum, y, t)

    if not x.is_center and not y.is_center and x.end != y.end:
        ei, ej = sum.end(x.end), sum.end(y.end)
        if sum.all_subcritical:
            return EstimateValue(1.0 / float(sum.v_max(st)), gauss, RegimeTag(Theorem.T1_i, tag))
        if ei.is_subcritical and ej.is_subcritical:
            val = (1.0 + (Dx + Dy) * log_t) / t
            return EstimateValue(val, gauss, RegimeTag(Theorem.T1_ii1, tag))
        if ei.is_critical and ej.is_critical:
            ux, uy = u_func(x, t), u_func(y, t)
            val = (ux * uy + w_func(x, t) * uy + ux * w_func(y, t)) / t
            return EstimateValue(val, gauss, RegimeTag(Theorem.T1_ii2, tag))
        if ei.is_critical:
            x, y, Dx = y, x, Dy
        val = (1.0 + Dx * u_func(y, t) * log_t) / t
        return EstimateValue(val, gauss, RegimeTag(Theorem.T1_ii3, tag))

    # same end, or one point in the centre
    if x.is_center:
        x, y, Dx, Dy = y, x, Dy, Dx
    i = x.end
    end = sum.end(i)
    if st <= min(x.abs, y.abs):
        return EstimateValue(1.0 / _ball_around(end, x.abs, st), gauss, RegimeTag(Theorem.T2_a, tag))
    if end.is_critical or comparable_to_max(sum, i, t2b_band):
        return EstimateValue(1.0 / _ball_around(end, x.abs, st), gauss, RegimeTag(Theorem.T2_b, tag))
    local = Dx * Dy / volume_ball(end, st)
    if sum.all_subcritical:
        val = local + 1.0 / float(sum.v_max(st))
        return EstimateValue(val, gauss, RegimeTag(Theorem.T3_i, tag))
    val = local + (1.0 + (Dx + Dy) * log_t) / t
    return EstimateValue(val, gauss, RegimeTag(Theorem.T3_ii, tag))


def power_estimate(sum: SumSpec, x: Point, y: Point, t: float, t_min: float = T_MIN) -> EstimateValue:
    """Closed forms for power-law ends, points on different ends."""
    alphas = [e.alpha for e in sum.ends]
    if any(a is None for a in alphas):
        raise UnsupportedProfileError("power_estimate needs power-law ends")
    if x.is_center or y.is_center or x.end == y.end:
        raise CaseMismatchError("power_estimate covers points on different ends; use kernel_estimate")
    _check_time(t, t_min)
    gauss = distance(sum, x, y) ** 2 / t
    tag = _time_regime(x, y, t)
    st = math.sqrt(t)
    log_t = math.log(t)
    if all(a < 2 for a in alphas):
        a = max(alphas)
        return EstimateValue(t ** (-a / 2), gauss, RegimeTag(Theorem.T1_i, tag))
    ai, aj = alphas[x.end], alphas[y.end]
    if ai < 2 and aj < 2:
        if min(x.abs, y.abs) >= st:
            return EstimateValue(log_t / t, gauss, RegimeTag(Theorem.T1_ii1, tag))
        # each bracket term is D, so it saturates at 1 outside sqrt(t)
        fx, fy = min(x.abs / st, 1.0), min(y.abs / st, 1.0)
        val = (1.0 + log_t * (fx ** (2 - ai) + fy ** (2 - aj))) / t
        # the factor is O(1) only when both points lie inside sqrt(t)
        g = gauss if max(x.abs, y.abs) > st else 0.0
        return EstimateValue(val, g, RegimeTag(Theorem.T1_ii1, tag))
    if ai == 2 and aj == 2:
        lx, ly = math.log(x.abs), math.log(y.abs)
        ux, uy = u_func(x, t), u_func(y, t)
        val = (ux * uy + ux * ly / (ly + log_t) + uy * lx / (lx + log_t)) / t
        return EstimateValue(val, gauss, RegimeTag(Theorem.T1_ii2, tag))
    if ai == 2:
        x, y, ai = y, x, aj
    val = (1.0 + (x.abs / (x.abs + st)) ** (2 - ai) * u_func(y, t) * log_t) / t
    return EstimateValue(val, gauss, RegimeTag(Theorem.T1_ii3, tag))


def regime_estimate(sum: SumSpec, case: TimeRegime | str, t: float, ends: tuple = (0, 1), t_min: float = T_MIN) -> EstimateValue:
    """Size of ``p`` in the long-time regime or, for ``ends``, the medium regime."""
    case = TimeRegime(case)
    sum.require_classes()
    _check_time(t, t_min)
    st = math.sqrt(t)
    long = 1.0 / float(sum.v_max(st))
    if case is TimeRegime.Long:
        return EstimateValue(long, 0.0, RegimeTag(Theorem.OnDiagonal, TimeRegime.Long))
    if case is not TimeRegime.Medium:
        raise CaseMismatchError(f"no closed form for regime {case.value}")
    i, j = ends
    if i == j:
        raise CaseMismatchError("the medium regime needs two different ends")
    ei, ej = sum.end(i), sum.end(j)
    if sum.all_subcritical:
        return EstimateValue(long, 0.0, RegimeTag(Theorem.T1_i, TimeRegime.Medium))
    if ei.is_subcritical and ej.is_subcritical:
        return EstimateValue(math.log(t) / t, 0.0, RegimeTag(Theorem.T1_ii1, TimeRegime.Medium))
    if ei.is_critical and ej.is_critical:
        return EstimateValue(1.0 / (t * math.log(t)), 0.0, RegimeTag(Theorem.T1_ii2, TimeRegime.Medium))
    return EstimateValue(long, 0.0, RegimeTag(Theorem.T1_ii3, TimeRegime.Medium))


# ---------------------------------------------------------------------------
# exit probabilities and Dirichlet kernels of a single end


def exit_prob_estimate(end: EndSpec, abs_x: float, t: float, form: str = "general") -> EstimateValue:
    """``psi_{E_i}(x, t)``, the probability of leaving the end by time ``t``.

    ``form="general"`` uses the two-branch expression in terms of ``H``;
    ``form="simplified"`` the class-specific shape (``1`` or ``U``).
    """
    end.require_class()
    a = _abs_of(abs_x)
    if not t > 0:
        raise DomainError("t must be positive")
    gauss = a * a / t
    if form == "simplified":
        if end.is_subcritical:
            return EstimateValue(1.0, gauss)
        return EstimateValue(u_func(a, t), gauss)
    if form != "general":
        raise DomainError(f"unknown form {form!r}")
    if t < 2 * a * a:
        return EstimateValue(a * a / (volume_ball(end, a) * h_func(end, a)), gauss)
    st = math.sqrt(t)
    return EstimateValue(integral_s_over_v(end, a, st) / h_func(end, st), 0.0)


def exit_prob_rate_estimate(end: EndSpec, abs_x: float, t: float, form: str = "general") -> EstimateValue:
    """Time derivative of :func:`exit_prob_estimate`."""
    end.require_class()
    a = _abs_of(abs_x)
    gauss = a * a / t if t > 0 else math.inf
    if form == "simplified":
        if end.is_subcritical:
            return EstimateValue(_d_end(end, a, _t2(t)) / t, gauss)
        return EstimateValue(w_func(a, _t2(t)) / (t * math.log(t)), gauss)
    if form != "general":
        raise DomainError(f"unknown form {form!r}")
    if not t >= 1:
        raise DomainError("the rate estimate needs t >= 1")
    st = math.sqrt(t)
    hx, ht = h_func(end, a), h_func(end, st)
    return EstimateValue(hx / (volume_ball(end, st) * (hx + ht) * ht), gauss)


def _t2(t: float) -> float:
    _check_t(t)
    return t


def dirichlet_estimate(end: EndSpec, abs_x: float, abs_y: float, t: float) -> EstimateValue:
    """Dirichlet heat kernel of the end ``E_i`` (absorbed at the centre)."""
    end.require_class()
    a, c = _abs_of(abs_x), _abs_of(abs_y)
    _check_t(t)
    if end.is_subcritical:
        fx, fy = _d_end(end, a, t), _d_end(end, c, t)
    else:
        fx, fy = w_func(a, t), w_func(c, t)
    val = fx * fy / _ball_around(end, a, math.sqrt(t))
    return EstimateValue(val, (a - c) ** 2 / t)


# ---------------------------------------------------------------------------
# gluing


def _eval(v, b: float) -> float:
    if isinstance(v, EstimateValue):
        return v.value(1.0, b)
    v = float(v)
    if not v >= 0:
        raise DomainError("gluing inputs must be nonnegative")
    return v


def glue(p_A, P, G_int, psi_x, psi_y, dpsi_x, dpsi_y, b: float = 1.0) -> EstimateValue:
    """Compose ``p_A + P psi psi + G (dpsi psi + psi dpsi)``.

    Inputs are numbers or EstimateValues; the latter are evaluated with
    Gaussian constant ``b`` so the result carries no exponent of its own.
    """
    pa, p, g = _eval(p_A, b), _eval(P, b), _eval(G_int, b)
    px, py, dx, dy = (_eval(v, b) for v in (psi_x, psi_y, dpsi_x, dpsi_y))
    return EstimateValue(pa + p * px * py + g * (dx * py + dy * px))


def central_integral(sum: SumSpec, t: float) -> float:
    """Size of ``int_1^t ds / V_max(sqrt s)``."""
    if sum.all_subcritical:
        return t / float(sum.v_max(math.sqrt(t)))
    return math.log(t)


def glue_estimate(
    sum: SumSpec,
    x: Point,
    y: Point,
    t: float,
    b: float = 1.0,
    t_min: float = T_MIN,
    boundary_pad: float = BOUNDARY_PAD,
) -> EstimateValue:
    """Gluing formula with ``A``, ``B`` the ends of ``x`` and ``y``.

    Exit terms use the simplified class shapes.  A point in the centre has
    already left its end, so its exit probability is 1 with zero rate.
    """
    sum.require_classes()
    _check_time(t, t_min)
    x, y = _snap(x, boundary_pad), _snap(y, boundary_pad)
    P = 1.0 / float(sum.v_max(math.sqrt(t)))
    G = central_integral(sum, t)

    def exit_terms(p: Point):
        if p.is_center:
            return 1.0, 0.0
        end = sum.end(p.end)
        return (
            exit_prob_estimate(end, p.abs, t, "simplified"),
            exit_prob_rate_estimate(end, p.abs, t, "simplified"),
        )

    px, dx = exit_terms(x)
    py, dy = exit_terms(y)
    p_A = 0.0
    if not x.is_center and not y.is_center and x.end == y.end:
        p_A = dirichlet_estimate(sum.end(x.end), x.abs, y.abs, t)
    return glue(p_A, P, G, px, py, dx, dy, b=b)
