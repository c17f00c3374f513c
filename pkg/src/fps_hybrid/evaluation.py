"""Spectral efficiency of target and hybrid precoders, and Monte-Carlo sweeps."""

import logging
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import FpsError
from .fps_core import (altmin, bd_baseband, bd_leakage, build_phase_bank,
                       normalize_digital)
from .sysmodel import (CombinerSet, SystemConfig, design_combiners,
                       fully_digital_precoder, generate_channels, precoder_matrix)

__all__ = [
    "ALGORITHMS", "SWEEP_VARS", "EvalResult", "spectral_efficiency",
    "evaluate_realization", "run_sweep",
]

log = logging.getLogger(__name__)

ALGORITHMS = ("fully-digital", "fps-altmin")
SWEEP_VARS = ("snr_db", "n_shifters")

_REG = 1e-12


def spectral_efficiency(ch, precoder, combiners: CombinerSet, cfg: SystemConfig) -> float:
    """
    Subcarrier-averaged sum rate in bits/s/Hz under Gaussian signaling.

    Every precoder column carries unit symbol power, so with the target
    normalized to ``K N_s F`` the noise variance is ``1 / SNR``. For user
    ``k`` on subcarrier ``f`` with combiner ``W`` and ``G_j = W^H H F_j``::

        R_kf = log2 det(I + R_n^{-1} G_k G_k^H)
        R_n  = sigma^2 W^H W + sum_{j != k} G_j G_j^H

    The result is ``sum_{k,f} R_kf / F``.
    """
    mat = precoder_matrix(precoder)
    n_users, n_sc = ch.channels.shape[:2]
    ns = cfg.n_streams
    sigma2 = cfg.noise_power
    total = 0.0
    for f in range(n_sc):
        for k in range(n_users):
            w = combiners.combiner(k, f)
            g = w.conj().T @ ch.channels[k, f] @ mat[:, f * n_users * ns:(f + 1) * n_users * ns]
            gk = g[:, k * ns:(k + 1) * ns]
            rn = sigma2 * (w.conj().T @ w) + g @ g.conj().T - gk @ gk.conj().T
            sign_n, logdet_n = np.linalg.slogdet(rn)
            if sign_n.real <= 0 or not np.isfinite(logdet_n):
                warnings.warn("singular noise covariance; regularizing", RuntimeWarning)
                rn = rn + _REG * np.eye(rn.shape[0])
                _, logdet_n = np.linalg.slogdet(rn)
            _, logdet_s = np.linalg.slogdet(rn + gk @ gk.conj().T)
            total += (logdet_s - logdet_n) / np.log(2.0)
    return max(float(total) / n_sc, 0.0)


@dataclass
class EvalResult:
    """Aggregate of one (sweep point, algorithm) pair."""

    algorithm_tag: str
    sweep_var: str
    sweep_value: float
    per_realization: List[Dict[str, float]] = field(default_factory=list)
    failed: List[Dict[str, object]] = field(default_factory=list)
    config_echo: Dict[str, object] = field(default_factory=dict)
    se_normalization: str = "per-subcarrier average"

    def _col(self, key):
        return np.array([r[key] for r in self.per_realization], dtype=float)

    @property
    def n_realizations(self) -> int:
        return len(self.per_realization)

    @property
    def mean_se(self) -> float:
        return float(np.mean(self._col("spectral_efficiency"))) if self.per_realization else float("nan")

    @property
    def std_se(self) -> float:
        if self.n_realizations < 2:
            return 0.0
        return float(np.std(self._col("spectral_efficiency"), ddof=1))

    @property
    def stderr_se(self) -> float:
        return self.std_se / np.sqrt(max(self.n_realizations, 1))

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self._col("altmin_iterations"))) if self.per_realization else float("nan")

    @property
    def mean_candidate_set_size(self) -> float:
        vals = self._col("mean_candidate_set_size")
        vals = vals[np.isfinite(vals)]
        return float(np.mean(vals)) if vals.size else float("nan")

    @property
    def runtime_ms(self) -> float:
        return float(np.sum(self._col("runtime_ms")))

    def to_dict(self) -> Dict[str, object]:
        d = asdict(self)
        d.update(mean_se=self.mean_se, std_se=self.std_se)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, object]) -> "EvalResult":
        keys = cls.__dataclass_fields__.keys()
        return cls(**{k: v for k, v in d.items() if k in keys})


def _hybrid_pipeline(ch, target, cfg: SystemConfig, tol: float, max_iter: int):
    bank = build_phase_bank(cfg.n_shifters, cfg.n_rf_tx)
    hp, report = altmin(target, bank, tol=tol, max_iter=max_iter)
    leakage = float("nan")
    if cfg.n_users > 1:
        # BD needs receive combiners; they are fixed from the pre-BD effective channel
        combiners = design_combiners(ch, hp, cfg)
        hp = bd_baseband(ch, hp, combiners, cfg)
        leakage = bd_leakage(ch, hp, combiners, cfg)
        hp = normalize_digital(hp, cfg)
    else:
        hp = normalize_digital(hp, cfg)
        combiners = design_combiners(ch, hp, cfg)
    return hp, combiners, report, leakage


def evaluate_realization(cfg: SystemConfig, algorithms: Sequence[str], seed: int,
                         tol: float = 1e-4, max_iter: int = 100) -> Dict[str, Dict[str, object]]:
    """
    Run every algorithm on one seeded channel draw.

    Returns a mapping algorithm -> record. Failed runs carry an ``error``
    entry instead of a spectral efficiency.
    """
    ch = generate_channels(cfg, np.random.default_rng(seed))
    out: Dict[str, Dict[str, object]] = {}
    target = None
    target_err = None
    try:
        target = fully_digital_precoder(ch, cfg)
    except FpsError as exc:
        target_err = exc
    for algo in algorithms:
        t0 = time.perf_counter()
        try:
            if target_err is not None:
                raise target_err
            if algo == "fully-digital":
                combiners = design_combiners(ch, target, cfg, mode="fully-digital")
                se = spectral_efficiency(ch, target, combiners, cfg)
                rec = dict(altmin_iterations=0, mean_candidate_set_size=float("nan"),
                           bd_leakage=float("nan"))
            elif algo == "fps-altmin":
                hp, combiners, report, leak = _hybrid_pipeline(ch, target, cfg, tol, max_iter)
                se = spectral_efficiency(ch, hp, combiners, cfg)
                rec = dict(altmin_iterations=report.iterations,
                           mean_candidate_set_size=float(np.mean(report.candidate_set_sizes)),
                           bd_leakage=leak, converged=report.converged,
                           surrogate_trace=report.surrogate_trace)
            else:
                raise ValueError(f"unknown algorithm {algo!r}")
        except (FpsError, np.linalg.LinAlgError) as exc:
            out[algo] = dict(error=f"{type(exc).__name__}: {exc}")
            continue
        rec.update(spectral_efficiency=se, runtime_ms=1e3 * (time.perf_counter() - t0))
        out[algo] = rec
    return out


def _task(args):
    cfg, algorithms, seed, tol, max_iter = args
    return evaluate_realization(cfg, algorithms, seed, tol, max_iter)


def run_sweep(cfg_base: SystemConfig, sweep: Optional[Dict[str, Sequence[float]]] = None,
              algorithms: Sequence[str] = ALGORITHMS, n_realizations: int = 1,
              seed: Optional[int] = None, tol: float = 1e-4, max_iter: int = 100,
              workers: int = 1) -> List[EvalResult]:
    """
    Evaluate algorithms over a sweep of SNR or phase-shifter counts.

    Parameters
    ----------
    cfg_base : SystemConfig
        Configuration shared by every sweep point.
    sweep : dict, optional
        ``{"snr_db": [...]}`` or ``{"n_shifters": [...]}``. ``None`` runs
        the base configuration once.
    algorithms : sequence of str
        Subset of :data:`ALGORITHMS`.
    n_realizations : int
        Channel draws per sweep point. Realization ``r`` uses seed
        ``seed + r`` so all algorithms and sweep points share channels.
    seed : int, optional
        Defaults to ``cfg_base.rng_seed``.
    workers : int
        Process count; results are merged by realization index.

    Returns
    -------
    list of EvalResult
        Sweep-point-major, then in the order of ``algorithms``.
    """
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    for algo in algorithms:
        if algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algo!r}")
    cfg_base.validate()
    seed = cfg_base.rng_seed if seed is None else int(seed)
    if not sweep:
        var, values = "single", [None]
    else:
        (var, values), = sweep.items()
        if var not in SWEEP_VARS:
            raise ValueError(f"cannot sweep over {var!r}")

    results: List[EvalResult] = []
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        for value in values:
            cfg = cfg_base if value is None else cfg_base.replace(**{var: value})
            cfg.validate()
            tasks = [(cfg, tuple(algorithms), seed + r, tol, max_iter)
                     for r in range(n_realizations)]
            records = list(pool.map(_task, tasks)) if pool else [_task(t) for t in tasks]
            point = []
            for algo in algorithms:
                res = EvalResult(algo, var, float("nan") if value is None else float(value),
                                 config_echo=cfg.to_dict())
                for r, rec in enumerate(records):
                    rec = dict(rec[algo], realization=r)
                    if "error" in rec:
                        log.warning("%s realization %d failed: %s", algo, r, rec["error"])
                        res.failed.append(rec)
                    else:
                        res.per_realization.append(rec)
                point.append(res)
            results.extend(point)
            log.info("%s=%s: %s", var, value,
                     ", ".join(f"{r.algorithm_tag} {r.mean_se:.4f}" for r in point))
    finally:
        if pool:
            pool.shutdown()
    return results
