"""Scenario configuration files (strict JSON).

Unknown keys are rejected.  Lengths are in grid units and times in squared
grid units.  Example::

    {
      "name": "r1r2",
      "ends": [{"alpha": 1.0}, {"alpha": 2.0}],
      "grid": {"R_max": 2000, "n_cells": 3000, "spacing_ratio": 1.002},
      "times": {"lo": 100, "hi": 10000, "count": 21},
      "points": [{"end": 0, "abs": 10}, {"end": 1, "sqrt_t": 0.5}]
    }
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError, DomainError, HeatKernelError
from .estimator import T_MIN, ConstantProfile
from .geometry import EndSpec, PowerLaw, SumSpec, Tabulated
from .oracle import R_A, StepConfig
from .validate import BAND_LIMIT, SCENARIOS, SLOPE_TOL, CaseSpec, ScenarioSpec


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EndCfg(_Strict):
    alpha: float | None = Field(default=None, gt=0, le=2)
    tabulated: str | None = None

    @model_validator(mode="after")
    def _one_of(self):
        if (self.alpha is None) == (self.tabulated is None):
            raise ValueError("an end needs exactly one of 'alpha' or 'tabulated'")
        return self


class GridCfg(_Strict):
    R_max: float = Field(default=2000.0, gt=0)
    n_cells: int = Field(default=3000, ge=1000)
    spacing_ratio: float = Field(default=1.002, ge=1.0, le=1.05)
    r_A: list[float] = Field(default_factory=lambda: [R_A, 3 * R_A])


class RangeCfg(_Strict):
    lo: float = Field(gt=0)
    hi: float = Field(gt=0)
    count: int = Field(ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.hi < self.lo or (self.count > 1 and self.hi == self.lo):
            raise ValueError("need lo < hi (or lo == hi with count 1)")
        return self

    def values(self) -> np.ndarray:
        return np.geomspace(self.lo, self.hi, self.count)


class PointCfg(_Strict):
    end: int | None = Field(default=None, ge=0)
    abs: float | None = Field(default=None, ge=math.e)
    sqrt_t: float | None = Field(default=None, gt=0)
    center: bool = False

    @model_validator(mode="after")
    def _shape(self):
        if self.center:
            if self.end is not None or self.abs is not None or self.sqrt_t is not None:
                raise ValueError("a centre point takes no other fields")
        elif self.end is None or (self.abs is None) == (self.sqrt_t is None):
            raise ValueError("a point needs 'end' and exactly one of 'abs' or 'sqrt_t'")
        return self

    def rule(self) -> tuple:
        if self.center:
            return (None, 0.0)
        return (self.end, self.abs if self.abs is not None else ("sqrt_t", self.sqrt_t))


class ConstantsCfg(_Strict):
    C_low: float = Field(default=1.0, gt=0)
    C_up: float = Field(default=1.0, gt=0)
    b_low: float = Field(default=1.0, gt=0)
    b_up: float = Field(default=1.0, gt=0)


class BandsCfg(_Strict):
    band_limit: float = Field(default=BAND_LIMIT, gt=1)
    slope_tol: float = Field(default=SLOPE_TOL, gt=0)


class StepsCfg(_Strict):
    dt0: float = Field(default=StepConfig.dt0, gt=0)
    growth: float = Field(default=StepConfig.growth, ge=1.0, le=1.2)


class CaseCfg(_Strict):
    name: str
    kind: Literal["kernel", "diagonal", "medium"] = "kernel"
    x: PointCfg = PointCfg(center=True)
    ys: list[PointCfg] = Field(default_factory=lambda: [PointCfg(center=True)])
    times: RangeCfg | None = None
    slope_target: float | None = None


class ScenarioConfig(_Strict):
    name: str = "custom"
    ends: list[EndCfg] | None = None
    center_mass: float = Field(default=1.0, gt=0)
    grid: GridCfg = GridCfg()
    times: RangeCfg = RangeCfg(lo=100.0, hi=1e4, count=21)
    lambdas: RangeCfg | None = None
    points: list[PointCfg] = Field(default_factory=list)
    cases: list[CaseCfg] | None = None
    constants: ConstantsCfg = ConstantsCfg()
    bands: BandsCfg = BandsCfg()
    steps: StepsCfg = StepsCfg()
    t_min: float = Field(default=T_MIN, gt=0)


class Loaded:
    """A parsed configuration with its derived objects."""

    def __init__(self, cfg: ScenarioConfig, base: Path, band_limit: float | None = None):
        self.cfg = cfg
        self.base = base
        self.band_limit = cfg.bands.band_limit if band_limit is None else band_limit
        self.sum = self._build_sum()
        self.constants = ConstantProfile(**cfg.constants.model_dump())
        self.steps = StepConfig(dt0=cfg.steps.dt0, growth=cfg.steps.growth)
        self.times = cfg.times.values()
        self._check()

    @property
    def name(self) -> str:
        return self.cfg.name

    def _build_sum(self) -> SumSpec:
        cfg = self.cfg
        if cfg.ends is None:
            if cfg.name not in SCENARIOS:
                raise ConfigError("'ends' is required unless 'name' is a bundled scenario")
            return SumSpec.from_alphas(SCENARIOS[cfg.name].alphas, cfg.center_mass)
        ends = []
        for i, e in enumerate(cfg.ends):
            if e.alpha is not None:
                ends.append(EndSpec(i, PowerLaw(e.alpha)))
                continue
            path = (self.base / e.tabulated).resolve()
            try:
                data = np.loadtxt(path, delimiter=",", ndmin=2)
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read tabulated profile {path}: {exc}") from exc
            if data.shape[1] != 2:
                raise ConfigError(f"{path}: expected two columns (radius, weight)")
            ends.append(EndSpec(i, Tabulated(tuple(data[:, 0]), tuple(data[:, 1]))))
        return SumSpec(tuple(ends), cfg.center_mass)

    def _check(self) -> None:
        cfg = self.cfg
        for t in self._all_times():
            if t.min() <= cfg.t_min:
                raise ConfigError(
                    f"t={t.min():g} is in the small-time range t <= {cfg.t_min:g}; the Li-Yau estimate applies there"
                )
        t_max = max(float(t.max()) for t in self._all_times())
        if cfg.grid.R_max < 4 * math.sqrt(t_max):
            raise ConfigError(f"grid.R_max={cfg.grid.R_max:g} is below 4*sqrt(t_max)={4 * math.sqrt(t_max):g}")
        for p in self._all_points():
            if p.end is not None and p.end >= self.sum.k:
                raise ConfigError(f"point refers to end {p.end} of a {self.sum.k}-end sum")
            if p.abs is not None and p.abs - math.e > cfg.grid.R_max:
                raise ConfigError(f"point |x|={p.abs:g} lies beyond grid.R_max")
        if cfg.lambdas is not None and cfg.lambdas.lo * cfg.grid.R_max**2 < 10:
            raise ConfigError("lambdas.lo is below the safe floor 10/R_max^2")

    def _all_times(self):
        yield self.times
        for c in self.cfg.cases or ():
            if c.times is not None:
                yield c.times.values()

    def _all_points(self):
        yield from self.cfg.points
        for c in self.cfg.cases or ():
            yield c.x
            yield from c.ys

    @property
    def t_max(self) -> float:
        return max(float(t.max()) for t in self._all_times())

    def scenario_spec(self) -> ScenarioSpec:
        cfg = self.cfg
        if cfg.cases is not None:
            cases = tuple(self._case(c) for c in cfg.cases)
        elif cfg.name in SCENARIOS:
            cases = SCENARIOS[cfg.name].cases
        else:
            cases = self._default_cases()
        return ScenarioSpec(
            name=cfg.name,
            alphas=tuple(e.alpha or 0.0 for e in self.sum.ends),
            cases=cases,
            R_max=cfg.grid.R_max,
            n_cells=cfg.grid.n_cells,
            spacing_ratio=cfg.grid.spacing_ratio,
            band_limit=self.band_limit,
            slope_tol=cfg.bands.slope_tol,
            steps=self.steps,
        )

    def _case(self, c: CaseCfg) -> CaseSpec:
        t = c.times or self.cfg.times
        return CaseSpec(c.name, c.x.rule(), tuple(y.rule() for y in c.ys), t.lo, t.hi, t.count, c.kind, c.slope_target)

    def _default_cases(self) -> tuple:
        t = self.cfg.times
        alphas = [e.alpha for e in self.sum.ends]
        slope = None
        if all(a is not None for a in alphas):
            slope = -1.0 if self.sum.has_critical else -max(alphas) / 2
        cases = [CaseSpec("OnDiagonal", (None, 0.0), ((None, 0.0),), t.lo, t.hi, t.count, "diagonal", slope)]
        cases.append(CaseSpec("Medium", (0, ("sqrt_t", 1.0)), ((1, ("sqrt_t", 1.0)),), t.lo, t.hi, t.count, "medium"))
        return tuple(cases)


def load(path, band_limit: float | None = None) -> Loaded:
    """Parse and validate a config file; every failure becomes ConfigError."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return from_dict(raw, path.parent, band_limit)


def from_dict(raw, base: Path = Path("."), band_limit: float | None = None) -> Loaded:
    try:
        cfg = ScenarioConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    try:
        return Loaded(cfg, Path(base), band_limit)
    except ConfigError:
        raise
    except (DomainError, HeatKernelError) as exc:
        raise ConfigError(str(exc)) from exc
