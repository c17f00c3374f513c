"""
Fixed-phase-shifter (FPS) hybrid precoding by alternating minimization.

The analog precoder is ``S C``: a binary switch matrix ``S`` in front of a
bank ``C`` of ``N_c`` fixed phase shifters replicated per RF chain. The
digital precoder is ``alpha * F_DD`` with ``F_DD`` semi-unitary. Each
iteration solves the (alpha, S) block exactly with a sort-and-scan over the
projected target, then the ``F_DD`` block by a Procrustes-type SVD.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (BDInfeasibleError, DegenerateInputError,
                     DegenerateTargetError, DimensionError, NormalizationError)
from .linalg import fro2, null_space, svd

__all__ = [
    "PhaseBank", "HybridPrecoder", "AlphaSearchProblem", "Candidate",
    "AltMinReport", "build_phase_bank", "surrogate_objective",
    "true_objective", "init_fdd_sc", "init_fdd_mc", "update_fdd_sc",
    "update_fdd_mc", "alpha_search", "solve_binary_scale",
    "solve_alpha_switch", "threshold_switch", "altmin", "bd_baseband",
    "bd_leakage", "normalize_digital", "SINGLE_CARRIER", "MULTICARRIER",
]

SINGLE_CARRIER = "single-carrier"
MULTICARRIER = "multicarrier"

# relative slack used when comparing candidate objective values
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class PhaseBank:
    """
    Fixed phase vector ``c`` and its block-diagonal replication ``C``.

    ``C`` is ``(N_c N_RF) x N_RF`` with ``c`` in column ``r``, rows
    ``r N_c`` to ``(r + 1) N_c``.
    """

    phases: np.ndarray
    n_rf: int

    @property
    def n_shifters(self) -> int:
        return self.phases.shape[0]

    @property
    def c(self) -> np.ndarray:
        return np.exp(1j * self.phases) / np.sqrt(self.n_shifters)

    @property
    def C(self) -> np.ndarray:
        nc, nrf = self.n_shifters, self.n_rf
        out = np.zeros((nc * nrf, nrf), dtype=complex)
        for r in range(nrf):
            out[r * nc:(r + 1) * nc, r] = self.c
        return out

    def analog(self, s: np.ndarray) -> np.ndarray:
        """``S @ C`` without forming ``C``."""
        n = s.shape[0]
        return s.reshape(n, self.n_rf, self.n_shifters) @ self.c

    def project(self, y: np.ndarray) -> np.ndarray:
        """``Y @ C^H`` for an ``N x N_RF`` matrix ``Y``."""
        n = y.shape[0]
        return (y[:, :, None] * self.c.conj()[None, None, :]).reshape(n, -1)


def build_phase_bank(n_shifters: int, n_rf: int,
                     phases: Optional[Sequence[float]] = None) -> PhaseBank:
    """Phase bank with ``theta_i = 2 pi (i - 1) / N_c`` unless ``phases`` is given."""
    if n_shifters < 1 or n_rf < 1:
        raise ValueError("n_shifters and n_rf must be positive")
    if phases is None:
        phases = 2 * np.pi * np.arange(n_shifters) / n_shifters
    phases = np.mod(np.asarray(phases, dtype=float), 2 * np.pi)
    if phases.shape != (n_shifters,):
        raise ValueError(f"expected {n_shifters} phases, got shape {phases.shape}")
    return PhaseBank(phases, int(n_rf))


@dataclass
class HybridPrecoder:
    """
    Factorization ``S C (alpha F_DD)``.

    ``f_bb`` is ``None`` until :func:`normalize_digital` sets it. After
    :func:`bd_baseband`, ``f_dd`` holds the cascaded digital stage and is no
    longer semi-unitary.
    """

    switch: np.ndarray
    bank: PhaseBank
    alpha: float
    f_dd: np.ndarray
    f_bb: Optional[np.ndarray] = None

    @property
    def digital(self) -> np.ndarray:
        return self.f_bb if self.f_bb is not None else self.alpha * self.f_dd

    @property
    def analog(self) -> np.ndarray:
        return self.bank.analog(self.switch)

    def matrix(self) -> np.ndarray:
        return self.analog @ self.digital


@dataclass
class Candidate:
    index: int
    value: float
    branch: str
    objective: float


@dataclass
class AlphaSearchProblem:
    """Sorted projection and the finite candidate set of the scale search."""

    x: np.ndarray
    x_sorted: np.ndarray
    candidates: List[Candidate]

    @property
    def intervals(self) -> np.ndarray:
        """``(n + 1) x 2`` array of ``[2 x_i, 2 x_{i+1}]`` including the two unbounded ends."""
        ends = np.concatenate(([-np.inf], 2 * self.x_sorted, [np.inf]))
        return np.stack([ends[:-1], ends[1:]], axis=1)


@dataclass
class AltMinReport:
    iterations: int = 0
    surrogate_trace: List[float] = field(default_factory=list)
    true_objective: float = float("nan")
    converged: bool = False
    candidate_set_sizes: List[int] = field(default_factory=list)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

def _as_array(f_opt) -> np.ndarray:
    return f_opt.matrix() if hasattr(f_opt, "matrix") else np.asarray(f_opt)


def _surrogate(f_opt, s, bank, f_dd, alpha) -> float:
    sc = bank.analog(s)
    cross = np.trace(f_dd @ f_opt.conj().T @ sc).real
    return fro2(f_opt) - 2 * alpha * cross + alpha ** 2 * float(s.sum())


def surrogate_objective(f_opt, hp: HybridPrecoder) -> float:
    """``||F_opt||^2 - 2 alpha Re tr(F_DD F_opt^H S C) + alpha^2 ||S||^2``."""
    return _surrogate(_as_array(f_opt), hp.switch, hp.bank, hp.f_dd, hp.alpha)


def true_objective(f_opt, hp: HybridPrecoder) -> float:
    return fro2(_as_array(f_opt) - hp.analog @ (hp.alpha * hp.f_dd))


# ---------------------------------------------------------------------------
# Digital block
# ---------------------------------------------------------------------------

def init_fdd_sc(f_opt, n_rf: int) -> np.ndarray:
    """
    Initial ``F_DD`` for the tall case ``M <= N_RF``: ``[V, 0]^H``.

    ``V`` holds the right singular vectors of ``F_opt``.
    """
    f_opt = _as_array(f_opt)
    m = f_opt.shape[1]
    if m > n_rf:
        raise DimensionError(f"single-carrier init needs M={m} <= N_RF={n_rf}")
    _, _, vh = svd(f_opt)
    out = np.zeros((n_rf, m), dtype=complex)
    out[:m] = vh
    return out


def init_fdd_mc(f_opt, n_rf: int) -> np.ndarray:
    """Initial ``F_DD`` for the wide case: the first ``N_RF`` right singular vectors, as rows."""
    f_opt = _as_array(f_opt)
    m = f_opt.shape[1]
    if m < n_rf:
        raise DimensionError(f"multicarrier init needs M={m} >= N_RF={n_rf}")
    _, _, vh = svd(f_opt)
    return vh[:n_rf].copy()


def _check_alpha(alpha: float) -> None:
    if alpha == 0 or not np.isfinite(alpha):
        raise DegenerateInputError("digital update needs a finite nonzero alpha")


def update_fdd_sc(f_opt, s: np.ndarray, bank: PhaseBank, alpha: float) -> np.ndarray:
    """
    Maximize ``alpha Re tr(F_DD F_opt^H S C)`` over ``F_DD^H F_DD = I``.

    With ``alpha F_opt^H S C = U Sigma V_1^H`` the maximizer is ``V_1 U^H``.
    """
    _check_alpha(alpha)
    f_opt = _as_array(f_opt)
    a = alpha * (f_opt.conj().T @ bank.analog(s))
    if a.shape[0] > a.shape[1]:
        raise DimensionError("single-carrier update needs M <= N_RF")
    u, _, v1h = svd(a)
    return v1h.conj().T @ u.conj().T


def update_fdd_mc(f_opt, s: np.ndarray, bank: PhaseBank, alpha: float) -> np.ndarray:
    """
    Row-orthonormal ``F_DD = V U_1^H`` from ``alpha F_opt^H S C = U_1 Sigma V^H``.

    The sign of ``alpha`` is kept in the factorized matrix so the update
    still maximizes the cross term when ``alpha < 0``.
    """
    _check_alpha(alpha)
    f_opt = _as_array(f_opt)
    a = alpha * (f_opt.conj().T @ bank.analog(s))
    if a.shape[0] < a.shape[1]:
        raise DimensionError("multicarrier update needs M >= N_RF")
    u1, _, vh = svd(a)
    return vh.conj().T @ u1.conj().T


# ---------------------------------------------------------------------------
# (alpha, S) block
# ---------------------------------------------------------------------------

def _prefix_sums(xs: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(xs)))


def alpha_search(x) -> AlphaSearchProblem:
    """
    Sort the projection and collect the admissible prefix/suffix means.

    With ``xs`` sorted ascending, a negative scale selects a prefix and a
    positive scale a suffix. The prefix mean of the first ``i`` entries is
    admissible when it is negative and lies in ``[2 xs_i, 2 xs_{i+1}]``; the
    suffix mean of entries ``i+1..n`` when it is positive and lies in the
    same interval. Each admissible mean is the stationary point of the
    quadratic piece on its interval.
    """
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    xs = np.sort(x)
    ps = _prefix_sums(xs)
    total_sq = float(xs @ xs)
    lo = np.concatenate(([-np.inf], 2 * xs))
    hi = np.concatenate((2 * xs, [np.inf]))
    counts = np.arange(n + 1)
    cands: List[Candidate] = []

    with np.errstate(divide="ignore", invalid="ignore"):
        neg = ps / counts
        pos = (ps[n] - ps) / (n - counts)
    neg_ok = (neg < 0) & (lo <= neg) & (neg <= hi)
    neg_ok[0] = False
    pos_ok = (pos > 0) & (lo <= pos) & (pos <= hi)
    pos_ok[n] = False
    for i in np.flatnonzero(neg_ok):
        cands.append(Candidate(int(i), float(neg[i]), "negative",
                               total_sq - ps[i] ** 2 / i))
    for i in np.flatnonzero(pos_ok):
        tail = ps[n] - ps[i]
        cands.append(Candidate(int(i), float(pos[i]), "positive",
                               total_sq - tail ** 2 / (n - i)))
    return AlphaSearchProblem(x, xs, cands)


def _clamped_fallback(xs: np.ndarray, ps: np.ndarray) -> List[Candidate]:
    """Best clamped point of every quadratic piece; used only when no mean is admissible."""
    n = xs.size
    total_sq = float(xs @ xs)
    lo = np.concatenate(([-np.inf], 2 * xs))
    hi = np.concatenate((2 * xs, [np.inf]))
    out = []
    for i in range(n + 1):
        for branch, cnt, s in (("negative", i, ps[i]), ("positive", n - i, ps[n] - ps[i])):
            if cnt == 0:
                continue
            a_lo, a_hi = (lo[i], min(hi[i], 0.0)) if branch == "negative" else (max(lo[i], 0.0), hi[i])
            if a_lo > a_hi:
                continue
            a = min(max(s / cnt, a_lo), a_hi)
            if a == 0.0 or not np.isfinite(a):
                continue
            out.append(Candidate(i, float(a), branch, total_sq - 2 * a * s + cnt * a * a))
    return out


def _pick(cands: List[Candidate]) -> Candidate:
    best = min(c.objective for c in cands)
    slack = _TIE_RTOL * max(1.0, abs(best))
    tied = [c for c in cands if c.objective <= best + slack]
    # smallest |alpha| wins, then positive before negative
    return min(tied, key=lambda c: (abs(c.value), c.value < 0))


def threshold_switch(x: np.ndarray, alpha: float) -> np.ndarray:
    """Indicator rule: ``x > alpha/2`` for positive alpha, ``x < alpha/2`` for negative."""
    x = np.asarray(x, dtype=float)
    if alpha > 0:
        return (x > alpha / 2).astype(np.uint8)
    if alpha < 0:
        return (x < alpha / 2).astype(np.uint8)
    return np.zeros(x.shape, dtype=np.uint8)


def solve_binary_scale(x) -> Tuple[float, np.ndarray, float, AlphaSearchProblem]:
    """
    Exact ``min ||x - alpha s||^2`` over real ``alpha`` and binary ``s``.

    Returns
    -------
    alpha, s, f, problem
        Optimal scale, binary vector of the same shape as ``x``, attained
        objective and the search record (candidate set included).

    Raises
    ------
    DegenerateTargetError
        If ``x`` is identically zero.
    """
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        raise DegenerateTargetError("projected target is identically zero")
    prob = alpha_search(x)
    cands = prob.candidates
    if not cands:
        cands = _clamped_fallback(prob.x_sorted, _prefix_sums(prob.x_sorted))
    best = _pick(cands)
    return best.value, threshold_switch(x, best.value), float(best.objective), prob


def _projection(f_opt: np.ndarray, f_dd: np.ndarray, bank: PhaseBank) -> np.ndarray:
    return bank.project(f_opt @ f_dd.conj().T).real


def solve_alpha_switch(f_opt, f_dd: np.ndarray, bank: PhaseBank) -> Tuple[float, np.ndarray, float]:
    """
    Jointly optimal ``(alpha, S)`` for ``||Re(F_opt F_DD^H C^H) - alpha S||_F^2``.

    Returns
    -------
    alpha : float
    s : np.ndarray
        ``N_t x (N_c N_RF)`` uint8 switch matrix.
    f : float
        Attained objective.
    """
    alpha, s, f, _ = solve_binary_scale(_projection(_as_array(f_opt), f_dd, bank))
    return alpha, s, f


# ---------------------------------------------------------------------------
# Alternating loop
# ---------------------------------------------------------------------------

def _regime(m: int, n_rf: int, regime: Optional[str]) -> str:
    if regime is None or regime == "auto":
        return SINGLE_CARRIER if m <= n_rf else MULTICARRIER
    if regime == SINGLE_CARRIER and m > n_rf:
        raise DimensionError(f"single-carrier regime needs M={m} <= N_RF={n_rf}")
    if regime == MULTICARRIER and m < n_rf:
        raise DimensionError(f"multicarrier regime needs M={m} >= N_RF={n_rf}")
    if regime not in (SINGLE_CARRIER, MULTICARRIER):
        raise ValueError(f"unknown regime {regime!r}")
    return regime


def altmin(f_opt, bank: PhaseBank, regime: Optional[str] = None, tol: float = 1e-4,
           max_iter: int = 100) -> Tuple[HybridPrecoder, AltMinReport]:
    """
    Two-block coordinate descent on the surrogate objective.

    Stops when the surrogate changes by at most ``tol * max(1, |g|)``
    between iterations (the first iteration compares against the value
    reached by its own ``(alpha, S)`` step) or after ``max_iter``
    iterations. Block diagonalization and power normalization are left to
    :func:`bd_baseband` and :func:`normalize_digital`.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    f_opt = _as_array(f_opt)
    m = f_opt.shape[1]
    regime = _regime(m, bank.n_rf, regime)
    if regime == SINGLE_CARRIER:
        init, update = init_fdd_sc, update_fdd_sc
    else:
        init, update = init_fdd_mc, update_fdd_mc

    f_dd = init(f_opt, bank.n_rf)
    norm_sq = fro2(f_opt)
    report = AltMinReport()
    prev = None
    for it in range(1, max_iter + 1):
        x = _projection(f_opt, f_dd, bank)
        alpha, s_vec, f_min, prob = solve_binary_scale(x)
        s = s_vec
        report.candidate_set_sizes.append(len(prob.candidates))
        if prev is None:
            prev = norm_sq - fro2(x) + f_min
        f_dd = update(f_opt, s, bank, alpha)
        g = _surrogate(f_opt, s, bank, f_dd, alpha)
        report.surrogate_trace.append(g)
        report.iterations = it
        if abs(g - prev) <= tol * max(1.0, abs(g)):
            report.converged = True
            break
        prev = g

    hp = HybridPrecoder(s, bank, alpha, f_dd)
    report.true_objective = true_objective(f_opt, hp)
    return hp, report


# ---------------------------------------------------------------------------
# Multiuser stage and normalization
# ---------------------------------------------------------------------------

def _effective(ch, hp: HybridPrecoder, combiners, f: int, n_users: int, ns: int) -> List[np.ndarray]:
    a = hp.analog
    cols = slice(f * n_users * ns, (f + 1) * n_users * ns)
    dig = hp.f_dd[:, cols]
    return [combiners.combiner(k, f).conj().T @ ch.channels[k, f] @ a @ dig
            for k in range(n_users)]


def bd_baseband(ch, hp: HybridPrecoder, combiners, cfg) -> HybridPrecoder:
    """
    Cascade a per-subcarrier block-diagonalizing matrix after ``F_DD``.

    For subcarrier ``f`` the effective channels
    ``E_k = W_k^H H_k S C F_DD,f`` (``N_s x K N_s``) are computed; user
    ``k``'s block of ``D_f`` spans the null space of the other users'
    ``E_j`` followed by the dominant right singular vectors of ``E_k``
    restricted to it.
    """
    n_users, ns = cfg.n_users, cfg.n_streams
    if n_users == 1:
        return replace(hp)
    n_sc = ch.channels.shape[1]
    f_dd = hp.f_dd.copy()
    for f in range(n_sc):
        eff = _effective(ch, hp, combiners, f, n_users, ns)
        blocks = []
        for k in range(n_users):
            others = np.concatenate([eff[j] for j in range(n_users) if j != k])
            basis = null_space(others)
            if basis.shape[1] < ns:
                raise BDInfeasibleError(
                    f"subcarrier {f}, user {k}: null space dimension {basis.shape[1]} < N_s={ns}")
            _, sv, vh = svd(eff[k] @ basis)
            if sv.size == 0 or sv[0] <= 1e-12 * max(1.0, np.linalg.norm(eff[k])):
                raise BDInfeasibleError(
                    f"subcarrier {f}, user {k}: no signal survives the null-space projection")
            blocks.append(basis @ vh[:ns].conj().T)
        cols = slice(f * n_users * ns, (f + 1) * n_users * ns)
        f_dd[:, cols] = hp.f_dd[:, cols] @ np.concatenate(blocks, axis=1)
    return replace(hp, f_dd=f_dd, f_bb=None)


def bd_leakage(ch, hp: HybridPrecoder, combiners, cfg) -> float:
    """Largest ``||W_j^H H_j F_k||_F`` over subcarriers and user pairs ``j != k``."""
    n_users, ns = cfg.n_users, cfg.n_streams
    worst = 0.0
    for f in range(ch.channels.shape[1]):
        eff = _effective(ch, hp, combiners, f, n_users, ns)
        for j in range(n_users):
            for k in range(n_users):
                if j != k:
                    worst = max(worst, float(np.linalg.norm(eff[j][:, k * ns:(k + 1) * ns])))
    return worst


def normalize_digital(hp: HybridPrecoder, cfg) -> HybridPrecoder:
    """Scale the digital stage so that ``||S C F_BB||_F^2 = K N_s F``."""
    norm = np.sqrt(fro2(hp.analog @ hp.f_dd))
    if norm == 0.0:
        raise NormalizationError(
            "||S C F_DD||_F = 0; the switch matrix selected nothing (degenerate AltMin output)")
    f_bb = (np.sqrt(cfg.n_total_streams) / norm) * hp.f_dd
    return replace(hp, f_bb=f_bb)
