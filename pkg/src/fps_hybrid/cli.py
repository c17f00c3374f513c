"""
Command-line experiment runner.

``run`` executes a sweep and writes a CSV summary plus a JSON sidecar with
per-realization data; ``verify`` certifies the closed-form (alpha, S)
solver against the brute-force oracles.
"""

import argparse
import csv
import datetime as _dt
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__
from .errors import ConfigError, DegenerateTargetError, DimensionError
from .evaluation import ALGORITHMS, run_sweep
from .fps_core import solve_binary_scale
from .oracle import OracleBudget, brute_force_alpha_s, grid_alpha_scan
from .sysmodel import SystemConfig, load_config

log = logging.getLogger("fps_hybrid")

CSV_COLUMNS = ("sweep_var", "sweep_value", "algorithm", "mean_se", "std_se",
               "n_realizations", "mean_iterations", "mean_candidate_set_size", "runtime_ms")

SWEEP_DEFAULTS = {
    "snr": ("snr_db", [-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0]),
    "nc": ("n_shifters", [5, 10, 15, 20, 25, 30]),
}

DESK_REALIZATIONS = 100
PAPER_REALIZATIONS = 1000

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO = 0, 1, 2, 3, 4


@dataclass
class RunManifest:
    config: Optional[str]
    sweep: str
    algorithms: List[str]
    realizations: int
    out: str
    seed: int
    values: List[float] = field(default_factory=list)
    paper_scale: bool = False
    tol: float = 1e-4
    max_iter: int = 100
    timestamp: str = ""
    version: str = __version__


def _fmt(v) -> str:
    """Shortest round-trip text for reals; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if not np.isfinite(v) else repr(float(v))
    return str(v)


def paper_scale(cfg: SystemConfig) -> SystemConfig:
    changes = dict(n_tx_antennas=144, tx_grid=(12, 12), n_rx_antennas=16, rx_grid=(4, 4))
    if cfg.n_subcarriers > 1:
        changes["n_subcarriers"] = 128
    return cfg.replace(**changes)


def write_outputs(results, manifest: RunManifest, timing: bool = False) -> None:
    header = [f"# {k}: {json.dumps(v)}" for k, v in asdict(manifest).items()]
    buf = io.StringIO()
    for line in header:
        buf.write(line + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in results:
        writer.writerow([
            r.sweep_var, _fmt(r.sweep_value), r.algorithm_tag, _fmt(r.mean_se), _fmt(r.std_se),
            r.n_realizations, _fmt(r.mean_iterations), _fmt(r.mean_candidate_set_size),
            _fmt(r.runtime_ms) if timing else "",
        ])
    out = Path(manifest.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(buf.getvalue())
    sidecar = dict(manifest=asdict(manifest),
                   csv_columns=list(CSV_COLUMNS),
                   results=[r.to_dict() for r in results])
    out.with_suffix(".json").write_text(json.dumps(sidecar, indent=1, default=_json_default))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def cmd_run(manifest: RunManifest, timing: bool = False, workers: int = 1) -> int:
    try:
        cfg = load_config(manifest.config) if manifest.config else SystemConfig()
        cfg = cfg.replace(rng_seed=manifest.seed)
        if manifest.paper_scale:
            cfg = paper_scale(cfg)
    except ConfigError as exc:
        key = f" (key: {exc.key})" if exc.key else ""
        print(f"error: invalid config{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    sweep = None
    if manifest.sweep != "single":
        var, default = SWEEP_DEFAULTS[manifest.sweep]
        if not manifest.values:
            manifest.values = list(default)
        sweep = {var: manifest.values}
    try:
        cfg.validate()
        if sweep:
            for v in manifest.values:
                cfg.replace(**{var: v}).validate()
    except DimensionError as exc:
        print(f"error: infeasible dimensions: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigError as exc:
        print(f"error: invalid config (key: {exc.key}): {exc}", file=sys.stderr)
        return EXIT_CONFIG

    manifest.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    results = run_sweep(cfg, sweep, manifest.algorithms, manifest.realizations,
                        seed=manifest.seed, tol=manifest.tol, max_iter=manifest.max_iter,
                        workers=workers)
    try:
        write_outputs(results, manifest, timing)
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_verify(budget: OracleBudget, n_cases: int, seed: int, n: int = 12,
               out=None) -> int:
    """
    Check the closed-form (alpha, S) solver on ``n_cases`` Gaussian vectors.

    Exit code 0 iff every case matches the enumeration oracle within 1e-9,
    the grid scan never beats it by more than 1e-6, and the chosen scale is
    a prefix/suffix mean rather than an interval endpoint.
    """
    out = out or sys.stdout
    if n_cases == 0:
        print("warning: 0 cases requested; vacuous pass", file=out)
        return EXIT_OK
    if n > budget.max_n:
        print(f"error: n={n} exceeds oracle budget max_n={budget.max_n}", file=out)
        return EXIT_CONFIG
    rng = np.random.default_rng(seed)
    max_df = max_grid_gain = 0.0
    failures = []
    for case in range(n_cases):
        x = rng.standard_normal(n)
        try:
            alpha, s, f = solve_binary_scale(x)[:3]
        except DegenerateTargetError as exc:
            failures.append((case, x, str(exc)))
            continue
        _, _, f_bf = brute_force_alpha_s(x, budget)
        _, f_grid = grid_alpha_scan(x, budget)
        df = abs(f - f_bf)
        gain = f - f_grid
        max_df = max(max_df, df)
        max_grid_gain = max(max_grid_gain, gain)
        sel = s.astype(bool)
        problems = []
        if df >= 1e-9:
            problems.append(f"|f - f_bruteforce| = {df:.3e}")
        if gain > 1e-6:
            problems.append(f"grid improves by {gain:.3e}")
        if not sel.any() or abs(alpha - x[sel].mean()) > 1e-9:
            problems.append("alpha is not the mean of the selected entries")
        if np.min(np.abs(alpha - 2 * x)) <= 1e-9:
            problems.append("alpha sits on an interval endpoint")
        if problems:
            failures.append((case, x, "; ".join(problems)))
    print(f"exactness: {n_cases} cases, n={n}, max |f - f_bruteforce| = {max_df:.3e} "
          f"[{'PASS' if max_df < 1e-9 else 'FAIL'}]", file=out)
    print(f"grid scan: max improvement over closed form = {max_grid_gain:.3e} "
          f"[{'PASS' if max_grid_gain <= 1e-6 else 'FAIL'}]", file=out)
    if failures:
        case, x, why = failures[0]
        print(f"FAIL: {len(failures)} case(s); first: case {case}: {why}", file=out)
        print("instance: " + json.dumps({"seed": seed, "case": case, "x": x.tolist()}), file=out)
        return EXIT_MISMATCH
    print("all checks passed", file=out)
    return EXIT_OK


def _csv_list(text: str) -> List[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fps-hybrid", description=__doc__.strip().splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log one line per sweep point")
    # also accepted after the subcommand; SUPPRESS keeps the top-level value otherwise
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run a spectral-efficiency sweep")
    r.add_argument("--config", help="flat key-value YAML file")
    r.add_argument("--sweep", choices=("snr", "nc", "single"), default="single")
    r.add_argument("--values", type=_csv_list, default=None,
                   help="comma-separated sweep values (defaults per sweep type)")
    r.add_argument("--algos", type=_csv_list, default=list(ALGORITHMS))
    r.add_argument("--realizations", type=int, default=None)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="CSV path; the JSON sidecar sits next to it")
    r.add_argument("--paper-scale", action="store_true")
    r.add_argument("--tol", type=float, default=1e-4)
    r.add_argument("--max-iter", type=int, default=100)
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--timing", action="store_true",
                   help="fill the runtime_ms column (makes the CSV run-dependent)")

    v = sub.add_parser("verify", parents=[common], help="certify the closed-form solver against oracles")
    v.add_argument("--cases", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--n", type=int, default=12)
    v.add_argument("--max-n", type=int, default=16)
    v.add_argument("--grid-points", type=int, default=100001)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    if args.command == "verify":
        if args.cases < 0 or args.seed < 0:
            print("error: --cases and --seed must be non-negative", file=sys.stderr)
            return EXIT_CONFIG
        return cmd_verify(OracleBudget(args.max_n, args.grid_points), args.cases, args.seed, args.n)

    unknown = [a for a in args.algos if a not in ALGORITHMS]
    if unknown:
        print(f"error: unknown algorithm(s) {unknown}; choose from {list(ALGORITHMS)}",
              file=sys.stderr)
        return EXIT_CONFIG
    if args.seed < 0:
        print("error: --seed must be non-negative", file=sys.stderr)
        return EXIT_CONFIG
    values = None
    if args.values:
        try:
            values = [float(v) if args.sweep == "snr" else int(v) for v in args.values]
        except ValueError:
            print(f"error: bad --values {args.values}", file=sys.stderr)
            return EXIT_CONFIG
    realizations = args.realizations or (PAPER_REALIZATIONS if args.paper_scale else DESK_REALIZATIONS)
    manifest = RunManifest(config=args.config, sweep=args.sweep, algorithms=args.algos,
                           realizations=realizations, out=args.out, seed=args.seed,
                           values=values or [], paper_scale=args.paper_scale,
                           tol=args.tol, max_iter=args.max_iter)
    return cmd_run(manifest, timing=args.timing, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
