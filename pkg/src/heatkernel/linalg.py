"""Direct O(n) solves for star-shaped (arrowhead) symmetric systems.

Unknowns are ordered as ``[centre, end_0 cells..., end_1 cells..., ...]``.
Each end contributes a symmetric tridiagonal block ``T_i`` and the centre is
coupled only to the first cell of every end.  Eliminating the centre through
its Schur complement reduces the solve to independent tridiagonal solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded


@dataclass
class Chain:
    """Symmetric tridiagonal block: ``diag`` (n,) and ``off`` (n-1,)."""

    diag: np.ndarray
    off: np.ndarray

    def banded(self) -> np.ndarray:
        n = self.diag.size
        ab = np.zeros((3, n))
        ab[0, 1:] = self.off
        ab[1] = self.diag
        ab[2, :-1] = self.off
        return ab

    def matvec(self, x):
        y = self.diag * x
        y[:-1] += self.off * x[1:]
        y[1:] += self.off * x[:-1]
        return y


def solve_chain(chain: Chain, rhs: np.ndarray) -> np.ndarray:
    if chain.diag.size == 1:
        return rhs / chain.diag[0]
    return solve_banded((1, 1), chain.banded(), rhs, overwrite_ab=True, check_finite=False)


def solve_arrowhead(center_diag: float, couplings, chains, rhs_center: float, rhs_chains):
    """Solve the arrowhead system.

    ``couplings[i]`` is the matrix entry linking the centre with the first cell
    of ``chains[i]``.  Returns ``(x_center, [x_chain_i, ...])``.
    """
    ys, zs = [], []
    for chain, r in zip(chains, rhs_chains):
        n = chain.diag.size
        b = np.zeros((n, 2))
        b[:, 0] = r
        b[0, 1] = 1.0
        sol = solve_chain(chain, b)
        ys.append(sol[:, 0])
        zs.append(sol[:, 1])
    num = rhs_center - sum(c * y[0] for c, y in zip(couplings, ys))
    den = center_diag - sum(c * c * z[0] for c, z in zip(couplings, zs))
    x0 = num / den
    return x0, [y - c * z * x0 for c, y, z in zip(couplings, ys, zs)]


def thomas(lower, diag, upper, rhs):
    """Plain Thomas elimination; reference implementation for tests."""
    n = len(diag)
    cp = np.empty(n)
    dp = np.empty(n)
    cp[0] = upper[0] / diag[0] if n > 1 else 0.0
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i - 1] * cp[i - 1]
        cp[i] = upper[i] / den if i < n - 1 else 0.0
        dp[i] = (rhs[i] - lower[i - 1] * dp[i - 1]) / den
    x = np.empty(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x
