"""Finite-volume diffusion on ``k`` weighted half-lines glued at one vertex.

The vertex stands for the compact centre ``K`` and carries the mass
``center_mass``.  Each end is cut into ``n`` cells with geometrically growing
widths; cell masses are exact integrals of the radial weight and the flux
across a face is ``sigma(face) / (distance between neighbouring centres)``.
Writing ``M`` for the diagonal mass matrix and ``S`` for the (symmetric,
negative semi-definite) conductance Laplacian, the generator is
``L = M^{-1} S``.  The outer boundary at ``R_max`` is reflecting.

All linear solves use :func:`heatkernel.linalg.solve_arrowhead`, which is
O(n) in the number of cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import BoundaryContaminationError, DomainError, SolverError, TruncationError
from .geometry import E_OFFSET, Point, SumSpec, Tabulated, volume_ball, weight
from .linalg import Chain, solve_arrowhead, solve_chain

DT0 = 1e-3
GROWTH = 1.01
N_SMOOTH = 4
POSITIVITY_TOL = 1e-10
R_A = 10.0


@dataclass(frozen=True, eq=False)
class StarGrid:
    sum: SumSpec
    R_max: float
    n: int
    q: float
    faces: tuple
    centers: tuple
    masses: tuple
    # cond[i][j]: conductance across the inner face of cell j (j = 0 couples to the vertex)
    cond: tuple
    t_max: float | None = None

    @property
    def k(self) -> int:
        return self.sum.k

    @property
    def size(self) -> int:
        return 1 + self.k * self.n

    @property
    def center_mass(self) -> float:
        return self.sum.center_mass

    def offset(self, end: int) -> int:
        return 1 + end * self.n

    def mass_vector(self) -> np.ndarray:
        return np.concatenate(([self.center_mass], *self.masses))

    def radial_vector(self) -> np.ndarray:
        return np.concatenate(([0.0], *self.centers))

    def cell_of(self, end: int | None, radial: float) -> int:
        """Global index of the cell containing radial position ``radial``."""
        if end is None:
            return 0
        if not 0 <= end < self.k:
            raise DomainError(f"no end {end}")
        if not 0 <= radial <= self.R_max:
            raise DomainError(f"radius {radial} outside [0, {self.R_max}]")
        j = int(np.searchsorted(self.faces[end], radial, side="right")) - 1
        return self.offset(end) + min(max(j, 0), self.n - 1)

    def cell_at(self, point: Point) -> int:
        return self.cell_of(point.end, point.radial)

    def cell_of_abs(self, end: int | None, abs_x: float) -> int:
        return self.cell_of(end, abs_x - E_OFFSET) if end is not None else 0

    def locate(self, idx: int) -> tuple[int | None, float]:
        """``(end, |x|)`` of a global cell index, ``(None, e)`` for the centre."""
        if idx == 0:
            return None, E_OFFSET
        end, j = divmod(idx - 1, self.n)
        return end, float(self.centers[end][j]) + E_OFFSET

    def cell_abs(self, idx: int) -> float:
        return self.locate(idx)[1]

    def dense_generator(self) -> np.ndarray:
        """Dense ``L = M^{-1} S``; only sensible for tiny grids."""
        S = _dense_stiffness(self)
        return S / self.mass_vector()[:, None]

    def cumulative_mass(self, end: int, r: float) -> float:
        """Centre mass plus the cells of ``end`` whose centre lies within ``r``."""
        sel = self.centers[end] <= r
        return self.center_mass + float(self.masses[end][sel].sum())


def build_grid(
    sum: SumSpec,
    R_max: float,
    n_cells_per_end: int,
    spacing_ratio: float = 1.0,
    t_max: float | None = None,
    allow_coarse: bool = False,
) -> StarGrid:
    """Discretise every end of ``sum`` on ``[0, R_max]``.

    ``t_max`` declares the longest time the grid will be used for; the build
    is refused when ``R_max < 4 sqrt(t_max)``.  ``allow_coarse`` lifts the
    1000-cell minimum for brute-force comparison grids.
    """
    n = int(n_cells_per_end)
    q = float(spacing_ratio)
    if n < 1000 and not allow_coarse:
        raise DomainError("need at least 1000 cells per end")
    if n < 1:
        raise DomainError("need at least one cell per end")
    if not 1.0 <= q <= 1.05:
        raise DomainError("spacing_ratio must lie in [1, 1.05]")
    if not R_max > 0:
        raise DomainError("R_max must be positive")
    if t_max is not None and R_max < 4.0 * math.sqrt(t_max):
        raise BoundaryContaminationError(
            f"R_max={R_max:g} is below 4*sqrt(t_max)={4 * math.sqrt(t_max):g}; refusing to build"
        )
    for e in sum.ends:
        if isinstance(e.profile, Tabulated) and R_max > e.profile.r_end:
            raise DomainError(f"R_max exceeds the tabulated range of end {e.id}")

    if q == 1.0:
        widths = np.full(n, R_max / n)
    else:
        h0 = R_max * (q - 1.0) / (q**n - 1.0)
        widths = h0 * q ** np.arange(n)
    faces = np.concatenate(([0.0], np.cumsum(widths)))
    faces[-1] = R_max
    centers = 0.5 * (faces[1:] + faces[:-1])
    gaps = np.diff(np.concatenate(([0.0], centers)))

    masses, conds = [], []
    for e in sum.ends:
        vol = np.concatenate(([0.0], volume_ball(e, faces[1:])))
        masses.append(np.diff(vol))
        conds.append(np.asarray(weight(e.profile, faces[:-1])) / gaps)
    return StarGrid(
        sum=sum,
        R_max=float(R_max),
        n=n,
        q=q,
        faces=tuple(faces.copy() for _ in sum.ends),
        centers=tuple(centers.copy() for _ in sum.ends),
        masses=tuple(masses),
        cond=tuple(conds),
        t_max=t_max,
    )


def _dense_stiffness(grid: StarGrid) -> np.ndarray:
    N = grid.size
    S = np.zeros((N, N))
    for i in range(grid.k):
        off = grid.offset(i)
        c = grid.cond[i]
        S[0, off] = S[off, 0] = c[0]
        for j in range(1, grid.n):
            S[off + j - 1, off + j] = S[off + j, off + j - 1] = c[j]
    S -= np.diag(S.sum(axis=1))
    return S


def graph_distance(grid: StarGrid, a: int, b: int) -> float:
    """Shortest-path distance between two cells along the grid graph."""
    rows, cols, w = [], [], []
    for i in range(grid.k):
        off = grid.offset(i)
        r = grid.centers[i]
        rows.append(0)
        cols.append(off)
        w.append(r[0])
        rows.extend(range(off, off + grid.n - 1))
        cols.extend(range(off + 1, off + grid.n))
        w.extend(np.diff(r))
    G = coo_matrix((w, (rows, cols)), shape=(grid.size, grid.size)).tocsr()
    d = dijkstra(G, directed=False, indices=a)
    return float(d[b])


# ---------------------------------------------------------------------------
# domains and operators


@dataclass(frozen=True)
class Domain:
    """Active region for a solve; everything outside is absorbing.

    ``ends=None`` means all ends; ``r_cut`` keeps only cells whose centre lies
    below that radius.
    """

    include_center: bool = True
    ends: tuple | None = None
    r_cut: float | None = None

    @classmethod
    def full(cls) -> "Domain":
        return cls()

    @classmethod
    def end(cls, i: int) -> "Domain":
        return cls(include_center=False, ends=(int(i),))

    @classmethod
    def exterior(cls) -> "Domain":
        """Complement of the centre vertex."""
        return cls(include_center=False)

    @classmethod
    def ball(cls, r: float) -> "Domain":
        return cls(include_center=True, r_cut=float(r))

    @property
    def is_full(self) -> bool:
        return self.include_center and self.ends is None and self.r_cut is None


class _Operator:
    """Restriction of ``M`` and ``S`` to the active cells of a domain."""

    def __init__(self, grid: StarGrid, domain: Domain):
        self.grid = grid
        self.domain = domain
        ends = range(grid.k) if domain.ends is None else domain.ends
        self.ends = tuple(ends)
        self.lengths = {}
        for i in self.ends:
            if not 0 <= i < grid.k:
                raise DomainError(f"domain refers to missing end {i}")
            m = grid.n if domain.r_cut is None else int(np.searchsorted(grid.centers[i], domain.r_cut))
            if m > 0:
                self.lengths[i] = m
        self.ends = tuple(self.lengths)
        mask = np.zeros(grid.size, dtype=bool)
        mask[0] = domain.include_center
        for i, m in self.lengths.items():
            off = grid.offset(i)
            mask[off : off + m] = True
        self.mask = mask
        if not mask.any():
            raise DomainError("empty domain")
        # total conductance leaving each active chain cell, including into absorbing neighbours
        self._chain_c = {}
        self._chain_tot = {}
        for i, m in self.lengths.items():
            c = grid.cond[i]
            inner = c[:m]
            outer = np.zeros(m)
            outer[: m - 1] = c[1:m]
            if m < grid.n:
                outer[m - 1] = c[m]
            self._chain_c[i] = c[1:m]
            self._chain_tot[i] = inner + outer
        self._center_tot = float(sum(grid.cond[i][0] for i in range(grid.k)))

    def stiffness(self, u: np.ndarray) -> np.ndarray:
        """``S u`` on the active cells (zeros elsewhere)."""
        g = self.grid
        out = np.zeros_like(u)
        for i, m in self.lengths.items():
            off = g.offset(i)
            ui = u[off : off + m]
            c = self._chain_c[i]
            s = -self._chain_tot[i] * ui
            s[:-1] += c * ui[1:]
            s[1:] += c * ui[:-1]
            if self.domain.include_center:
                s[0] += g.cond[i][0] * u[0]
            out[off : off + m] = s
        if self.domain.include_center:
            s0 = -self._center_tot * u[0]
            for i in self.lengths:
                s0 += g.cond[i][0] * u[g.offset(i)]
            out[0] = s0
        return out

    def solve(self, a: float, b: float, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(a M - b S) x = rhs`` on the active cells."""
        g = self.grid
        chains, rhs_chains, couplings = [], [], []
        for i, m in self.lengths.items():
            off = g.offset(i)
            diag = a * g.masses[i][:m] + b * self._chain_tot[i]
            chains.append(Chain(diag, -b * self._chain_c[i]))
            rhs_chains.append(rhs[off : off + m])
            couplings.append(-b * g.cond[i][0])
        x = np.zeros_like(rhs)
        if self.domain.include_center:
            d0 = a * g.center_mass + b * self._center_tot
            if chains:
                x0, xs = solve_arrowhead(d0, couplings, chains, rhs[0], rhs_chains)
            else:
                x0, xs = rhs[0] / d0, []
            x[0] = x0
        else:
            xs = [solve_chain(ch, r) for ch, r in zip(chains, rhs_chains)]
        for i, xi in zip(self.lengths, xs):
            off = g.offset(i)
            x[off : off + self.lengths[i]] = xi
        return x


# ---------------------------------------------------------------------------
# time stepping


@dataclass
class StepConfig:
    dt0: float = DT0
    growth: float = GROWTH
    n_smooth: int = N_SMOOTH
    positivity_tol: float = POSITIVITY_TOL
    dt_max: float | None = None


def _evolve(op: _Operator, u0: np.ndarray, t_grid, steps: StepConfig, observe):
    """Trapezoidal stepping of ``u' = L u`` with geometric step growth.

    The first ``n_smooth`` steps are implicit Euler steps of half size to damp
    the oscillatory transient of the trapezoidal rule.  ``observe(k, u)`` is
    called when the clock reaches ``t_grid[k]`` exactly.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0 or np.any(np.diff(t_grid) <= 0) or t_grid[0] <= 0:
        raise DomainError("t_grid must be positive and strictly increasing")
    g = op.grid
    if g.t_max is not None and t_grid[-1] > g.t_max * (1 + 1e-12):
        raise BoundaryContaminationError(f"t={t_grid[-1]:g} exceeds the grid's declared t_max={g.t_max:g}")
    M = g.mass_vector()
    u = np.where(op.mask, u0, 0.0)
    t = 0.0
    dt = steps.dt0
    k = 0
    n_done = 0
    while k < t_grid.size:
        target = t_grid[k]
        if n_done < steps.n_smooth:
            h = min(0.5 * steps.dt0, target - t)
            u = op.solve(1.0, h, M * u)
            landed = h < 0.5 * steps.dt0 or math.isclose(t + h, target, rel_tol=1e-14)
        else:
            h = min(dt, target - t)
            landed = h < dt or math.isclose(t + h, target, rel_tol=1e-14)
            u = op.solve(1.0, 0.5 * h, M * u + 0.5 * h * op.stiffness(u))
            dt *= steps.growth
            if steps.dt_max is not None:
                dt = min(dt, steps.dt_max)
        n_done += 1
        t = target if landed else t + h
        umax = float(np.max(np.abs(u)))
        if umax > 0 and float(u.min()) < -steps.positivity_tol * umax:
            raise SolverError(
                f"negative density {u.min():.3e} (peak {umax:.3e}) at t={t:.4g} after {n_done} steps"
            )
        if landed:
            observe(k, u)
            k += 1


@dataclass
class KernelSamples:
    """``p(t, x, y)`` for one source cell ``x`` and every cell ``y``."""

    t: np.ndarray
    x: int
    values: np.ndarray
    grid: StarGrid = field(repr=False)

    def at(self, y: int) -> np.ndarray:
        return self.values[:, y]

    def value(self, it: int, y: int) -> float:
        return float(self.values[it, y])

    def total_mass(self) -> np.ndarray:
        return self.values @ self.grid.mass_vector()


def _delta(grid: StarGrid, x: int) -> np.ndarray:
    u0 = np.zeros(grid.size)
    u0[x] = 1.0 / grid.mass_vector()[x]
    return u0


def _run_kernel(grid, domain, x, t_grid, steps):
    op = _Operator(grid, domain)
    if not op.mask[x]:
        raise DomainError(f"source cell {x} is outside the domain")
    t_grid = np.asarray(t_grid, dtype=float)
    out = np.empty((t_grid.size, grid.size))

    def observe(k, u):
        out[k] = u

    _evolve(op, _delta(grid, x), t_grid, steps or StepConfig(), observe)
    return KernelSamples(t_grid, x, out, grid)


def heat_kernel(grid: StarGrid, x: int, t_grid, steps: StepConfig | None = None) -> KernelSamples:
    """Heat kernel ``p(t, x, .)`` from cell ``x`` (a density per unit measure)."""
    return _run_kernel(grid, Domain.full(), x, t_grid, steps)


def dirichlet_kernel(grid: StarGrid, omega: Domain, x: int, t_grid, steps: StepConfig | None = None) -> KernelSamples:
    """Dirichlet heat kernel ``p_Omega(t, x, .)``; zero outside ``omega``."""
    return _run_kernel(grid, omega, x, t_grid, steps)


@dataclass
class ExitSeries:
    """Exit probability ``psi(x, t)`` and its rate ``d psi / dt`` at every cell."""

    t: np.ndarray
    psi: np.ndarray
    rate: np.ndarray
    x: int | None = None

    def at(self, x: int):
        return self.psi[:, x], self.rate[:, x]


def exit_probability(grid: StarGrid, omega: Domain, x: int | None, t_grid, steps: StepConfig | None = None) -> ExitSeries:
    """``psi_Omega(., t) = P(tau_Omega <= t)`` and its time derivative.

    Solves the survival function ``w = 1 - psi`` from ``w(0) = 1`` with zero
    boundary values outside ``omega``; the rate is the instantaneous flux
    ``-(L w)``.
    """
    op = _Operator(grid, omega)
    if x is not None and not op.mask[x]:
        raise DomainError(f"cell {x} is outside the domain")
    t_grid = np.asarray(t_grid, dtype=float)
    M = grid.mass_vector()
    psi = np.empty((t_grid.size, grid.size))
    rate = np.empty_like(psi)

    def observe(k, w):
        psi[k] = np.where(op.mask, 1.0 - w, 1.0)
        rate[k] = np.where(op.mask, -op.stiffness(w) / M, 0.0)

    _evolve(op, op.mask.astype(float), t_grid, steps or StepConfig(), observe)
    return ExitSeries(t_grid, psi, rate, x)


# ---------------------------------------------------------------------------
# resolvents


@dataclass
class ResolventSample:
    lam: float
    gamma: np.ndarray
    gamma_dot: np.ndarray
    phi: np.ndarray
    psi_big: np.ndarray


def resolvent_floor(grid: StarGrid) -> float:
    return 10.0 / grid.R_max**2


def resolvent(grid: StarGrid, lambda_grid, omega: Domain | None = None) -> list[ResolventSample]:
    """Integrated resolvent ``gamma = (lam - L)^{-1} 1_K`` and friends.

    ``gamma_dot`` solves ``(lam - L) v = gamma``; ``phi`` and ``psi_big`` are
    ``lam G^Omega 1`` and ``G^Omega (1 - phi)`` for ``omega`` (default: the
    complement of the centre, which restricts to ``Phi^{E_i}`` on each end).
    """
    omega = Domain.exterior() if omega is None else omega
    full = _Operator(grid, Domain.full())
    sub = _Operator(grid, omega)
    M = grid.mass_vector()
    floor = resolvent_floor(grid)
    out = []
    for lam in np.atleast_1d(np.asarray(lambda_grid, dtype=float)):
        if not lam > 0:
            raise DomainError("lambda must be positive")
        if lam < floor * (1 - 1e-12):
            raise TruncationError(f"lambda={lam:g} is below the safe floor {floor:g} (lambda * R_max^2 >= 10)")
        ind = np.zeros(grid.size)
        ind[0] = 1.0
        gamma = full.solve(lam, 1.0, M * ind)
        gamma_dot = full.solve(lam, 1.0, M * gamma)
        one = sub.mask.astype(float)
        phi = sub.solve(lam, 1.0, M * lam * one)
        psi_big = sub.solve(lam, 1.0, M * (one - phi) * one)
        out.append(ResolventSample(float(lam), gamma, gamma_dot, phi, psi_big))
    return out


def gamma_in_domain(grid: StarGrid, lam: float, omega: Domain) -> np.ndarray:
    """``gamma^A = G^A_lam 1_K`` for a domain ``A`` containing the centre."""
    if not omega.include_center:
        raise DomainError("domain must contain the centre")
    op = _Operator(grid, omega)
    ind = np.zeros(grid.size)
    ind[0] = 1.0
    return op.solve(lam, 1.0, grid.mass_vector() * ind)


def spectral_kernel(grid: StarGrid, x: int, t_grid) -> np.ndarray:
    """Brute-force ``exp(t L)`` propagator via a symmetric eigendecomposition."""
    M = grid.mass_vector()
    S = _dense_stiffness(grid)
    rt = np.sqrt(M)
    B = S / rt[:, None] / rt[None, :]
    w, V = sla.eigh(B)
    # p(t, x, .) = M^{-1/2} V exp(t w) V^T M^{-1/2} e_x
    coef = V[x] / rt[x]
    return np.array([(V @ (np.exp(t * w) * coef)) / rt for t in np.asarray(t_grid, dtype=float)])
