"""
System configuration, clustered mm-wave channels and fully digital targets.

Channels follow a Saleh-Valenzuela style clustered model on uniform planar
arrays (UPAs) at both ends. Frequency selectivity comes from assigning each
cluster a delay tap equal to its index, so subcarrier ``f`` sees cluster
``l`` rotated by ``exp(-j 2 pi f l / F)``.
"""

from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ConfigError, DegenerateInputError, DimensionError
from .linalg import null_space, svd

__all__ = [
    "SystemConfig", "ClusterParams", "ChannelSet", "TargetPrecoder",
    "CombinerSet", "upa_grid", "upa_steering", "generate_channels",
    "assemble_channels", "fully_digital_precoder", "design_combiners",
    "precoder_matrix", "load_config", "COMBINER_MODES",
]

COMBINER_MODES = ("fully-digital", "hybrid-fps")

Grid = Tuple[int, int]


def _parse_grid(value, key: str) -> Optional[Grid]:
    if value is None:
        return None
    if isinstance(value, str):
        parts = value.lower().replace("*", "x").split("x")
    else:
        parts = list(value)
    try:
        rows, cols = (int(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected 'ROWSxCOLS', got {value!r}", key=key) from None
    if rows < 1 or cols < 1:
        raise ConfigError(f"{key}: grid sides must be positive", key=key)
    return rows, cols


def upa_grid(n: int, grid: Optional[Grid] = None) -> Grid:
    """
    Rows x cols factorization of an ``n``-element planar array.

    With no explicit grid the most square factorization is used. Counts with
    no factorization having both sides > 1 (primes) are rejected unless
    given an explicit grid, e.g. ``(1, n)`` for a linear array.
    """
    if grid is not None:
        if grid[0] * grid[1] != n:
            raise ConfigError(f"grid {grid[0]}x{grid[1]} does not hold {n} antennas")
        return grid
    if n == 1:
        return 1, 1
    rows = int(np.floor(np.sqrt(n)))
    while n % rows:
        rows -= 1
    if rows == 1:
        raise ConfigError(f"{n} antennas have no rectangular planar factorization; "
                          "pass an explicit grid")
    return rows, n // rows


@dataclass(frozen=True)
class SystemConfig:
    """All dimensions, power and channel-model scalars of one simulation."""

    n_tx_antennas: int = 64
    n_rx_antennas: int = 16
    n_users: int = 1
    n_subcarriers: int = 1
    n_streams: int = 4
    n_rf_tx: int = 4
    n_rf_rx: int = 4
    n_shifters: int = 30
    snr_db: float = 0.0
    rng_seed: int = 0
    n_clusters: int = 5
    n_rays: int = 10
    angular_spread_deg: float = 10.0
    tx_grid: Optional[Grid] = None
    rx_grid: Optional[Grid] = None
    combiner_mode: str = "fully-digital"

    def __post_init__(self):
        object.__setattr__(self, "tx_grid", _parse_grid(self.tx_grid, "tx_grid"))
        object.__setattr__(self, "rx_grid", _parse_grid(self.rx_grid, "rx_grid"))
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("snr_db", "angular_spread_deg"):
                if isinstance(v, (bool, str)) or not np.isfinite(v):
                    raise ConfigError(f"{f.name} must be finite", key=f.name)
            elif f.name == "rng_seed":
                if isinstance(v, bool) or int(v) != v or v < 0:
                    raise ConfigError("rng_seed must be an unsigned integer", key=f.name)
                object.__setattr__(self, f.name, int(v))
            elif f.type is int or f.type == "int":
                if isinstance(v, bool) or int(v) != v or v < 1:
                    raise ConfigError(f"{f.name} must be a positive integer", key=f.name)
                object.__setattr__(self, f.name, int(v))
        if self.combiner_mode not in COMBINER_MODES:
            raise ConfigError(f"combiner_mode must be one of {COMBINER_MODES}",
                              key="combiner_mode")

    @property
    def n_total_streams(self) -> int:
        """Columns of the concatenated target, ``K * N_s * F``."""
        return self.n_users * self.n_streams * self.n_subcarriers

    @property
    def snr_linear(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def noise_power(self) -> float:
        # per-stream symbol power is normalized to one
        return 1.0 / self.snr_linear

    @property
    def tx_shape(self) -> Grid:
        return upa_grid(self.n_tx_antennas, self.tx_grid)

    @property
    def rx_shape(self) -> Grid:
        return upa_grid(self.n_rx_antennas, self.rx_grid)

    def check_dimensions(self) -> None:
        """Raise :class:`DimensionError` unless ``K N_s <= N_RF^t < N_t`` and ``N_s <= N_RF^r < N_r``."""
        k, ns = self.n_users, self.n_streams
        if not k * ns <= self.n_rf_tx < self.n_tx_antennas:
            raise DimensionError(
                f"need K*N_s <= N_RF^t < N_t, got {k}*{ns} <= {self.n_rf_tx} < {self.n_tx_antennas}")
        if not ns <= self.n_rf_rx < self.n_rx_antennas:
            raise DimensionError(
                f"need N_s <= N_RF^r < N_r, got {ns} <= {self.n_rf_rx} < {self.n_rx_antennas}")

    def validate(self) -> "SystemConfig":
        self.check_dimensions()
        self.tx_shape
        self.rx_shape
        return self

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, object]:
        d = asdict(self)
        for key in ("tx_grid", "rx_grid"):
            if d[key] is not None:
                d[key] = f"{d[key][0]}x{d[key][1]}"
        return d


CONFIG_KEYS = tuple(f.name for f in fields(SystemConfig))


def load_config(source: Union[str, Dict[str, object]], **overrides) -> SystemConfig:
    """
    Build a :class:`SystemConfig` from a flat key-value YAML file or mapping.

    Unknown keys raise :class:`ConfigError` carrying the offending key.
    """
    import yaml

    if isinstance(source, dict):
        data = dict(source)
    else:
        with open(source) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: expected a flat key-value document")
    data.update(overrides)
    for key, value in data.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        if isinstance(value, (dict, list)) and key not in ("tx_grid", "rx_grid"):
            raise ConfigError(f"{key}: nested values are not allowed", key=key)
    try:
        return SystemConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------

def upa_steering(shape: Grid, azimuth, elevation) -> np.ndarray:
    """
    Unit-norm UPA response with half-wavelength spacing.

    Element ``(m, n)`` of a ``rows x cols`` array (flattened row-major) has
    phase ``pi * (m sin(az) sin(el) + n cos(el))``.

    Returns
    -------
    np.ndarray
        Shape ``(rows * cols, n_angles)``.
    """
    rows, cols = shape
    az = np.atleast_1d(np.asarray(azimuth, dtype=float)).ravel()
    el = np.atleast_1d(np.asarray(elevation, dtype=float)).ravel()
    m = np.repeat(np.arange(rows), cols)[:, None]
    n = np.tile(np.arange(cols), rows)[:, None]
    phase = np.pi * (m * np.sin(az) * np.sin(el) + n * np.cos(el))
    return np.exp(1j * phase) / np.sqrt(rows * cols)


@dataclass
class ClusterParams:
    """Per-user ray parameters; angle and gain arrays are ``(n_clusters, n_rays)``."""

    gains: np.ndarray
    tx_azimuth: np.ndarray
    tx_elevation: np.ndarray
    rx_azimuth: np.ndarray
    rx_elevation: np.ndarray
    delays: np.ndarray


@dataclass
class ChannelSet:
    """``channels[k, f]`` is the ``N_r x N_t`` matrix of user ``k`` on subcarrier ``f``."""

    channels: np.ndarray
    cluster_params: List[ClusterParams] = field(default_factory=list)

    @property
    def n_users(self) -> int:
        return self.channels.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.channels.shape[1]


def assemble_channels(params: Sequence[ClusterParams], cfg: SystemConfig) -> ChannelSet:
    """Rebuild every ``H_{k,f}`` from stored cluster parameters."""
    n_sc = cfg.n_subcarriers
    tx_shape, rx_shape = cfg.tx_shape, cfg.rx_shape
    out = np.empty((len(params), n_sc, cfg.n_rx_antennas, cfg.n_tx_antennas), dtype=complex)
    sc = np.arange(n_sc)
    for k, p in enumerate(params):
        n_cl, n_ray = p.gains.shape
        scale = np.sqrt(cfg.n_tx_antennas * cfg.n_rx_antennas / (n_cl * n_ray))
        a_t = upa_steering(tx_shape, p.tx_azimuth, p.tx_elevation)
        a_r = upa_steering(rx_shape, p.rx_azimuth, p.rx_elevation)
        # (F, n_cl) delay rotation, broadcast over rays
        rot = np.exp(-2j * np.pi * np.outer(sc, p.delays) / n_sc)
        w = scale * (rot[:, :, None] * p.gains[None]).reshape(n_sc, -1)
        out[k] = np.einsum("ip,fp,jp->fij", a_r, w, a_t.conj(), optimize=True)
    return ChannelSet(out, list(params))


def generate_channels(cfg: SystemConfig, rng: Union[np.random.Generator, int, None] = None) -> ChannelSet:
    """
    Draw one clustered channel realization for every user.

    Cluster mean azimuths are uniform on ``[0, 2 pi)`` and elevations on
    ``[0, pi)``; rays spread around them with a Laplacian of standard
    deviation ``cfg.angular_spread_deg``. Ray gains are CN(0, 1).
    """
    if rng is None:
        rng = cfg.rng_seed
    rng = np.random.default_rng(rng)
    cfg.tx_shape, cfg.rx_shape
    n_cl, n_ray = cfg.n_clusters, cfg.n_rays
    b = np.deg2rad(cfg.angular_spread_deg) / np.sqrt(2.0)
    params = []
    for _ in range(cfg.n_users):
        angles = []
        for lo_hi in ((0, 2 * np.pi), (0, np.pi), (0, 2 * np.pi), (0, np.pi)):
            mean = rng.uniform(*lo_hi, size=(n_cl, 1))
            angles.append(rng.laplace(mean, b, size=(n_cl, n_ray)))
        gains = (rng.standard_normal((n_cl, n_ray))
                 + 1j * rng.standard_normal((n_cl, n_ray))) / np.sqrt(2.0)
        params.append(ClusterParams(gains, angles[0], angles[1], angles[2], angles[3],
                                    np.arange(n_cl)))
    return assemble_channels(params, cfg)


# ---------------------------------------------------------------------------
# Fully digital targets and combiners
# ---------------------------------------------------------------------------

@dataclass
class TargetPrecoder:
    """
    Concatenated fully digital precoder, ``N_t x (K N_s F)``.

    Block ``(k, f)`` occupies columns ``(f K + k) N_s`` to ``(f K + k + 1) N_s``,
    i.e. users vary fastest.
    """

    f_opt: np.ndarray
    n_users: int
    n_streams: int

    def block(self, k: int, f: int) -> np.ndarray:
        return _block(self.f_opt, k, f, self.n_users, self.n_streams)

    def matrix(self) -> np.ndarray:
        return self.f_opt


def _block(mat: np.ndarray, k: int, f: int, n_users: int, n_streams: int) -> np.ndarray:
    start = (f * n_users + k) * n_streams
    return mat[:, start:start + n_streams]


def precoder_matrix(precoder) -> np.ndarray:
    """``N_t x M`` transmit matrix of a target or hybrid precoder."""
    return precoder.matrix()


def _top_right(h: np.ndarray, n: int) -> np.ndarray:
    _, s, vh = svd(h)
    if s.size < n:
        raise DimensionError(f"channel supports {s.size} streams, {n} requested")
    return vh[:n].conj().T


def fully_digital_precoder(ch: ChannelSet, cfg: SystemConfig) -> TargetPrecoder:
    """
    Eigenbeamforming target (``K = 1``) or block diagonalization (``K > 1``).

    Every block has orthonormal columns, hence squared norm ``N_s``.
    """
    n_users, n_sc, _, n_t = ch.channels.shape
    ns = cfg.n_streams
    f_opt = np.empty((n_t, n_users * ns * n_sc), dtype=complex)
    for f in range(n_sc):
        for k in range(n_users):
            h = ch.channels[k, f]
            if n_users == 1:
                blk = _top_right(h, ns)
            else:
                others = np.concatenate([ch.channels[j, f] for j in range(n_users) if j != k])
                basis = null_space(others)
                if basis.shape[1] < ns:
                    raise DimensionError(
                        f"BD null space of user {k} has dimension {basis.shape[1]} < N_s={ns}")
                blk = basis @ _top_right(h @ basis, ns)
            start = (f * n_users + k) * ns
            f_opt[:, start:start + ns] = blk
    return TargetPrecoder(f_opt, n_users, ns)


@dataclass
class CombinerSet:
    """
    Per-user analog and per-(user, subcarrier) digital combiners.

    In fully digital mode ``w_rf[k]`` is the ``N_r x N_r`` identity and the
    whole combiner lives in ``w_bb``.
    """

    w_rf: List[np.ndarray]
    w_bb: List[List[np.ndarray]]
    mode: str = "fully-digital"

    def combiner(self, k: int, f: int) -> np.ndarray:
        return self.w_rf[k] @ self.w_bb[k][f]


def _effective_blocks(ch: ChannelSet, precoder, n_streams: int):
    mat = precoder_matrix(precoder)
    n_users, n_sc = ch.channels.shape[:2]
    for k in range(n_users):
        yield k, [ch.channels[k, f] @ _block(mat, k, f, n_users, n_streams)
                  for f in range(n_sc)]


def design_combiners(ch: ChannelSet, precoder, cfg: SystemConfig,
                     mode: Optional[str] = None, tol: float = 1e-4,
                     max_iter: int = 100) -> CombinerSet:
    """
    Receive combiners matched to each user's effective channel.

    ``fully-digital`` takes the top ``N_s`` left singular vectors of
    ``H_{k,f} F_{k,f}``. ``hybrid-fps`` factorizes those combiners, stacked
    over subcarriers, with the same fixed-phase alternating minimization
    used at the transmitter (receiver dimensions, no power normalization).
    """
    from .fps_core import altmin, build_phase_bank

    mode = mode or cfg.combiner_mode
    if mode not in COMBINER_MODES:
        raise ConfigError(f"unknown combiner mode {mode!r}", key="combiner_mode")
    ns = cfg.n_streams
    w_rf, w_bb = [], []
    for k, eff in _effective_blocks(ch, precoder, ns):
        digital = []
        for e in eff:
            u, s, _ = svd(e)
            if s.size == 0 or s[0] == 0.0:
                raise DegenerateInputError(f"effective channel of user {k} is zero")
            digital.append(u[:, :ns])
        if mode == "fully-digital":
            w_rf.append(np.eye(ch.channels.shape[2], dtype=complex))
            w_bb.append(digital)
            continue
        target = np.concatenate(digital, axis=1)
        bank = build_phase_bank(cfg.n_shifters, cfg.n_rf_rx)
        hp, _ = altmin(target, bank, tol=tol, max_iter=max_iter)
        w_rf.append(bank.analog(hp.switch))
        wbb = hp.alpha * hp.f_dd
        w_bb.append([wbb[:, f * ns:(f + 1) * ns] for f in range(len(eff))])
    return CombinerSet(w_rf, w_bb, mode)
