"""Ends, connected sums and the radial coordinate conventions.

Every end is reduced to a weighted half-line ``[0, inf)`` with radial weight
``sigma``; its volume function is ``V(r) = int_0^r sigma``.  For power-law
ends the weight is ``alpha * s**(alpha - 1)`` beyond ``s = 1`` and the constant
``alpha`` below it, so ``V(r) = r**alpha + alpha - 1`` for ``r >= 1``.

Points carry the shifted coordinate ``|x| = d(x, K) + e``; the compact centre
``K`` is collapsed to a single vertex, so a point at ``|x|`` on an end sits at
radial position ``|x| - e``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import integrate

from .errors import DomainError, UnsupportedClassError, UnsupportedProfileError

E_OFFSET = math.e

BAND_CRIT = 4.0
BAND_SUB = 10.0
R_RANGE = (10.0, 1e12)

__all__ = [
    "E_OFFSET",
    "PowerLaw",
    "Tabulated",
    "EndKind",
    "EndClass",
    "EndSpec",
    "SumSpec",
    "Point",
    "volume_ball",
    "weight",
    "off_center_volume",
    "classify_end",
    "h_func",
    "integral_s_over_v",
    "distance",
]


@dataclass(frozen=True)
class PowerLaw:
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise DomainError(f"power-law exponent must lie in (0, 2], got {self.alpha}")


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Piecewise-linear radial weight sampled at increasing radii.

    Below the first radius the weight is held constant; beyond the last
    radius the profile is undefined.
    """

    radii: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        radii = np.asarray(self.radii, dtype=float)
        w = np.asarray(self.weight, dtype=float)
        if radii.ndim != 1 or radii.shape != w.shape or radii.size < 2:
            raise DomainError("radii and weight must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(radii) <= 0):
            raise DomainError("radii must be strictly increasing")
        if radii[0] >= 1.0 or radii[0] < 0.0:
            raise DomainError("radii must start in [0, 1)")
        if np.any(w <= 0):
            raise DomainError("tabulated weight must be strictly positive")
        # cumulative volume at each node; trapezoid is exact for piecewise-linear weight
        cum = np.concatenate(([w[0] * radii[0]], w[0] * radii[0] + np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(radii))))
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "_cum", cum)

    @property
    def r_end(self) -> float:
        return float(self.radii[-1])

    def sigma(self, s):
        s = np.asarray(s, dtype=float)
        return np.interp(s, self.radii, self.weight)

    def volume(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r > self.radii[-1] * (1 + 1e-12)):
            raise DomainError(f"radius beyond tabulated range (max {self.radii[-1]})")
        idx = np.clip(np.searchsorted(self.radii, r, side="right") - 1, 0, self.radii.size - 2)
        r0 = self.radii[idx]
        w0 = self.weight[idx]
        slope = (self.weight[idx + 1] - w0) / (self.radii[idx + 1] - r0)
        dr = r - r0
        inside = self._cum[idx] + w0 * dr + 0.5 * slope * dr * dr
        below = self.weight[0] * r
        return np.where(r < self.radii[0], below, inside)

    @classmethod
    def from_function(cls, sigma, r_max: float, n: int = 4000, r_min: float = 0.0) -> "Tabulated":
        """Sample ``sigma`` on a grid that is linear on ``[r_min, 1]`` and log-spaced beyond."""
        lin = np.linspace(r_min, 1.0, 64, endpoint=False)
        log = np.geomspace(1.0, r_max, n)
        radii = np.concatenate((lin, log))
        return cls(radii, np.asarray(sigma(radii), dtype=float))


Profile = Union[PowerLaw, Tabulated]


class EndKind(enum.Enum):
    CRITICAL = "Critical"
    SUBCRITICAL = "Subcritical"
    NEITHER = "Neither"


@dataclass(frozen=True)
class EndClass:
    """Classification result.  ``witness`` is the measured band value."""

    kind: EndKind
    witness: float
    crit_band: float = float("nan")
    sub_band: float = float("nan")

    @property
    def is_critical(self) -> bool:
        return self.kind is EndKind.CRITICAL

    @property
    def is_subcritical(self) -> bool:
        return self.kind is EndKind.SUBCRITICAL


# ---------------------------------------------------------------------------
# volume functions


def weight(profile: Profile, s):
    """Radial weight ``sigma(s)``."""
    s = np.asarray(s, dtype=float)
    if isinstance(profile, PowerLaw):
        a = profile.alpha
        return np.where(s < 1.0, a, a * np.power(np.maximum(s, 1.0), a - 1.0))
    return profile.sigma(s)


def _profile_volume(profile: Profile, r):
    r = np.asarray(r, dtype=float)
    if isinstance(profile, PowerLaw):
        a = profile.alpha
        return np.where(r < 1.0, a * r, np.power(np.maximum(r, 1.0), a) + a - 1.0)
    return profile.volume(r)


def _profile_of(end) -> Profile:
    return end.profile if isinstance(end, EndSpec) else end


def volume_ball(end, r):
    """``V_i(r)``: measure of the radial ball of radius ``r`` around the vertex."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(~(r_arr > 0)):
        raise DomainError("volume_ball needs r > 0")
    out = _profile_volume(_profile_of(end), r_arr)
    return float(out) if np.ndim(out) == 0 else out


def off_center_volume(end, abs_x, r):
    """Structural ``V_i(x, r) = r^2 / (1 + r / (|x| + r)^(alpha - 1))``."""
    profile = _profile_of(end)
    if not isinstance(profile, PowerLaw):
        raise UnsupportedProfileError("off-centre volume is only defined for power-law ends")
    abs_x = np.asarray(abs_x, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError("off_center_volume needs r > 0")
    if np.any(abs_x < E_OFFSET * (1 - 1e-12)):
        raise DomainError("|x| must be at least e")
    out = r * r / (1.0 + r / np.power(abs_x + r, profile.alpha - 1.0))
    return float(out) if np.ndim(out) == 0 else out


def integral_s_over_v(end, a: float, b: float) -> float:
    """``int_a^b s / V(s) ds`` by adaptive quadrature in ``log s``."""
    if a <= 0 or b <= 0:
        raise DomainError("integration limits must be positive")
    if b == a:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    profile = _profile_of(end)

    def f(u):
        s = math.exp(u)
        return s * s / float(_profile_volume(profile, s))

    lo, hi = math.log(a), math.log(b)
    # split at s = 1 where the power-law weight has a kink
    pts = [lo]
    if lo < 0.0 < hi:
        pts.append(0.0)
    pts.append(hi)
    total = 0.0
    for u0, u1 in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(f, u0, u1, epsabs=0.0, epsrel=1e-10, limit=200)
        total += val
    return sign * total


def h_func(end, r) -> float:
    """``H(r) = 1 + max(0, int_1^r s / V(s) ds)`` for ``r >= 1``."""
    if np.ndim(r):
        return np.array([h_func(end, float(v)) for v in np.ravel(r)]).reshape(np.shape(r))
    r = float(r)
    if not r >= 1.0:
        raise DomainError("h_func needs r >= 1")
    return 1.0 + max(0.0, integral_s_over_v(end, 1.0, r))


# ---------------------------------------------------------------------------
# classification


def classify_end(
    end,
    r_range: Sequence[float] = R_RANGE,
    band_crit: float = BAND_CRIT,
    band_sub: float = BAND_SUB,
    n_points: int = 64,
) -> EndClass:
    """Critical / subcritical / neither, tested on a log-spaced radius grid.

    Critical when ``V(r)/r^2`` varies by at most ``band_crit``; otherwise
    subcritical when ``int_1^r s/V / (r^2/V(r))`` stays below ``band_sub``.
    Tabulated profiles are tested only up to their last radius.
    """
    profile = _profile_of(end)
    r_lo, r_hi = float(r_range[0]), float(r_range[1])
    if isinstance(profile, Tabulated):
        r_hi = min(r_hi, profile.r_end)
        r_lo = max(1.0, min(r_lo, r_hi / 1e2))
    if r_lo < 1.0 or r_hi / r_lo < 1e2 * (1 - 1e-9):
        raise DomainError("classification range must satisfy 1 <= r_lo and r_hi / r_lo >= 100")
    radii = np.geomspace(r_lo, r_hi, n_points)
    vol = np.asarray(_profile_volume(profile, radii))
    q = vol / radii**2
    crit_ratio = float(q.max() / q.min())

    pieces = [integral_s_over_v(profile, 1.0, radii[0])]
    pieces += [integral_s_over_v(profile, a, b) for a, b in zip(radii[:-1], radii[1:])]
    cum = np.cumsum(pieces)
    sub_ratio = float(np.max(cum / (radii**2 / vol)))

    if crit_ratio <= band_crit:
        return EndClass(EndKind.CRITICAL, crit_ratio, crit_ratio, sub_ratio)
    if sub_ratio <= band_sub:
        return EndClass(EndKind.SUBCRITICAL, sub_ratio, crit_ratio, sub_ratio)
    return EndClass(EndKind.NEITHER, sub_ratio, crit_ratio, sub_ratio)


# ---------------------------------------------------------------------------
# ends, sums, points


@dataclass(frozen=True, eq=False)
class EndSpec:
    id: int
    profile: Profile
    cached_class: EndClass = field(default=None)

    def __post_init__(self):
        if self.cached_class is None:
            object.__setattr__(self, "cached_class", classify_end(self.profile))

    @classmethod
    def power(cls, id: int, alpha: float) -> "EndSpec":
        return cls(id, PowerLaw(float(alpha)))

    @property
    def alpha(self) -> float | None:
        return self.profile.alpha if isinstance(self.profile, PowerLaw) else None

    @property
    def is_critical(self) -> bool:
        return self.cached_class.is_critical

    @property
    def is_subcritical(self) -> bool:
        return self.cached_class.is_subcritical

    def volume(self, r):
        return volume_ball(self, r)

    def sigma(self, s):
        return weight(self.profile, s)

    def require_class(self) -> None:
        if self.cached_class.kind is EndKind.NEITHER:
            raise UnsupportedClassError(f"end {self.id} is neither critical nor subcritical")

    def __repr__(self):
        prof = f"alpha={self.alpha}" if self.alpha is not None else "tabulated"
        return f"EndSpec(id={self.id}, {prof}, {self.cached_class.kind.value})"


@dataclass(frozen=True, eq=False)
class SumSpec:
    ends: tuple
    center_mass: float = 1.0
    e_offset: float = field(default=E_OFFSET, init=False)

    def __post_init__(self):
        ends = tuple(self.ends)
        object.__setattr__(self, "ends", ends)
        if len(ends) < 2:
            raise DomainError("a connected sum needs at least two ends")
        if len({e.id for e in ends}) != len(ends):
            raise DomainError("end ids must be distinct")
        if not self.center_mass > 0:
            raise DomainError("center_mass must be positive")

    @classmethod
    def from_alphas(cls, alphas: Sequence[float], center_mass: float = 1.0) -> "SumSpec":
        return cls(tuple(EndSpec.power(i, a) for i, a in enumerate(alphas)), center_mass)

    @property
    def k(self) -> int:
        return len(self.ends)

    def end(self, i: int) -> EndSpec:
        return self.ends[i]

    def v_max(self, r):
        return np.max([np.asarray(volume_ball(e, r)) for e in self.ends], axis=0)[()]

    def v_min(self, r):
        return np.min([np.asarray(volume_ball(e, r)) for e in self.ends], axis=0)[()]

    @property
    def dominant(self) -> int:
        """Index of the end with the largest volume at large radius."""
        r = R_RANGE[1]
        vols = []
        for e in self.ends:
            rr = min(r, e.profile.r_end) if isinstance(e.profile, Tabulated) else r
            vols.append(float(volume_ball(e, rr)))
        return int(np.argmax(vols))

    @property
    def has_critical(self) -> bool:
        return any(e.is_critical for e in self.ends)

    @property
    def all_subcritical(self) -> bool:
        return all(e.is_subcritical for e in self.ends)

    def require_classes(self) -> None:
        for e in self.ends:
            e.require_class()

    def label(self) -> str:
        return "#".join(f"R{e.alpha:g}" if e.alpha is not None else f"T{e.id}" for e in self.ends)


@dataclass(frozen=True)
class Point:
    """A location on the connected sum: ``end=None`` means the centre."""

    end: int | None
    abs: float = E_OFFSET

    def __post_init__(self):
        if self.end is None:
            object.__setattr__(self, "abs", E_OFFSET)
        elif not self.abs >= E_OFFSET * (1 - 1e-12):
            raise DomainError(f"|x| must be at least e, got {self.abs}")

    @classmethod
    def center(cls) -> "Point":
        return cls(None)

    @classmethod
    def on_end(cls, end: int, abs_x: float) -> "Point":
        return cls(int(end), float(abs_x))

    @property
    def is_center(self) -> bool:
        return self.end is None

    @property
    def radial(self) -> float:
        """Distance to the centre vertex."""
        return 0.0 if self.end is None else self.abs - E_OFFSET


def distance(sum: SumSpec, x: Point, y: Point) -> float:
    """Radial-model distance with ``K`` collapsed to a point."""
    for p in (x, y):
        if p.end is not None and not (0 <= p.end < sum.k):
            raise DomainError(f"point refers to end {p.end} of a {sum.k}-end sum")
    if x.is_center or y.is_center or x.end != y.end:
        return x.radial + y.radial
    return abs(x.abs - y.abs)
