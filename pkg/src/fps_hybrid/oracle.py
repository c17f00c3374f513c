"""
Brute-force references for the closed-form solvers.

Used by the test suite and the ``verify`` subcommand only. Nothing here
shares code with :mod:`fps_hybrid.fps_core`.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import BudgetError

__all__ = ["OracleBudget", "brute_force_alpha_s", "grid_alpha_scan", "eigen_rate_oracle"]

_HARD_CAP = 24


@dataclass(frozen=True)
class OracleBudget:
    max_n: int = 16
    grid_points: int = 100001

    def __post_init__(self):
        if not 0 <= self.max_n <= _HARD_CAP:
            raise BudgetError(f"max_n must lie in [0, {_HARD_CAP}]")
        if self.grid_points < 2:
            raise BudgetError("grid_points must be at least 2")


def brute_force_alpha_s(x, budget: OracleBudget = OracleBudget()) -> Tuple[float, np.ndarray, float]:
    """
    Enumerate every binary ``s`` and solve the 1-D least squares for alpha.

    For nonzero ``s`` the best scale is ``<x, s> / <s, s>`` with residual
    ``||x||^2 - <x, s>^2 / <s, s>``; ``s = 0`` leaves ``||x||^2``. Ties go
    to the lexicographically smallest ``s``.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n > budget.max_n:
        raise BudgetError(f"length {n} exceeds the enumeration budget {budget.max_n}")
    codes = np.arange(2 ** n, dtype=np.int64)
    # first element is the most significant bit -> lexicographic order
    bits = ((codes[:, None] >> np.arange(n - 1, -1, -1)) & 1).astype(float)
    inner = bits @ x
    count = bits.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(count > 0, inner ** 2 / count, 0.0)
        alphas = np.where(count > 0, inner / count, 0.0)
    f = x @ x - gain
    best = int(np.argmin(f))
    return float(alphas[best]), bits[best].astype(np.uint8), float(f[best])


def grid_alpha_scan(x, budget: OracleBudget = OracleBudget()) -> Tuple[float, float]:
    """
    Scan alpha on a uniform grid, thresholding ``s`` at ``alpha / 2``.

    The grid spans ``[2 min(x) - 1, 2 max(x) + 1]``.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    alphas = np.linspace(2 * x.min() - 1, 2 * x.max() + 1, budget.grid_points)
    xs = np.sort(x)
    cs = np.concatenate(([0.0], np.cumsum(xs)))
    # entries strictly above / below the threshold alpha / 2
    above = np.searchsorted(xs, alphas / 2, side="right")
    below = np.searchsorted(xs, alphas / 2, side="left")
    pos = alphas > 0
    count = np.where(pos, n - above, np.where(alphas < 0, below, 0))
    total = np.where(pos, cs[n] - cs[above], np.where(alphas < 0, cs[below], 0.0))
    f = x @ x - 2 * alphas * total + alphas ** 2 * count
    i = int(np.argmin(f))
    return float(alphas[i]), float(f[i])


def eigen_rate_oracle(H, snr_linear: float, n_streams: int) -> float:
    """Equal-power eigenbeamforming rate ``sum_i log2(1 + sigma_i^2 snr / N_s)``."""
    sv = np.linalg.svd(np.asarray(H), compute_uv=False)[:n_streams]
    return float(np.sum(np.log2(1.0 + sv ** 2 * snr_linear / n_streams)))
