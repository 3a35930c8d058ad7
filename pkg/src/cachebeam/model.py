"""System model: configuration, popularity, radio propagation, and scenario generation.

All internal quantities are SI (watts, Hz, bits, bits/s, seconds, meters).
QoS/secrecy rates are converted to spectral SINR thresholds by dividing by the
system bandwidth, which keeps the Table-I bit/s requirements and the base-2
log rate expressions mutually consistent.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, asdict

import numpy as np
import yaml

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or inconsistent system configuration."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    if watts <= 0:
        raise ValueError(f"cannot express {watts} W in dBm")
    return 10.0 * math.log10(watts) + 30.0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Static system parameters (defaults reproduce the desk-scale profile)."""

    num_bs: int = 3
    num_users: int = 2
    num_files: int = 4
    tx_antennas: int = 2
    er_antennas: int = 1
    bandwidth_hz: float = 10e6
    slot_duration_s: float = 0.01
    file_size_bits: float = 4e9            # 500 MB per file
    subfiles_per_file: int = 270_000       # 45 min / 10 ms
    max_tx_power_w: float = dbm_to_watts(46.0)
    noise_density_w_per_hz: float = dbm_to_watts(-172.6)
    qos_rate_bps: float = 1.65e6
    secrecy_tolerance_bps: float = 150e3
    zipf_exponent: float = 1.1
    inter_bs_distance_m: float = 500.0
    min_rx_distance_m: float = 50.0
    cache_capacity_bits: float = 8e9
    backhaul_pmf: tuple[tuple[float, float], ...] = ((0.0, 0.3), (3e6, 0.4), (6e6, 0.3))

    def __post_init__(self):
        for name in ("num_bs", "num_users", "num_files", "tx_antennas",
                     "er_antennas", "subfiles_per_file"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")
        for name in ("bandwidth_hz", "slot_duration_s", "file_size_bits",
                     "max_tx_power_w", "noise_density_w_per_hz", "qos_rate_bps",
                     "zipf_exponent", "inter_bs_distance_m", "min_rx_distance_m"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if self.secrecy_tolerance_bps < 0 or self.cache_capacity_bits < 0:
            raise ConfigError("secrecy_tolerance_bps and cache_capacity_bits must be >= 0")
        if self.secrecy_tolerance_bps >= self.qos_rate_bps:
            raise ConfigError(
                "secrecy_tolerance_bps must be below qos_rate_bps; otherwise the "
                "guaranteed secrecy rate [Rreq - Rtol]+ is zero")
        pmf = tuple((float(c), float(p)) for c, p in self.backhaul_pmf)
        if any(c < 0 or p < 0 for c, p in pmf):
            raise ConfigError("backhaul_pmf entries must be non-negative")
        if abs(sum(p for _, p in pmf) - 1.0) > 1e-12:
            raise ConfigError("backhaul_pmf probabilities must sum to 1")
        object.__setattr__(self, "backhaul_pmf", pmf)

    @property
    def noise_power_w(self) -> float:
        return noise_power(self.noise_density_w_per_hz, self.bandwidth_hz)

    @property
    def sinr_threshold_qos(self) -> float:
        return rate_to_sinr_threshold(self.qos_rate_bps, self.bandwidth_hz)

    @property
    def sinr_threshold_secrecy(self) -> float:
        return rate_to_sinr_threshold(self.secrecy_tolerance_bps, self.bandwidth_hz)

    @property
    def library_bits(self) -> float:
        return self.num_files * self.file_size_bits

    def replace(self, **changes) -> "SystemConfig":
        d = asdict(self)
        d.update(changes)
        return SystemConfig(**d)

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class PopularityProfile:
    """Request probability per file, non-increasing for Zipf input."""

    theta: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.theta, dtype=float)
        if t.ndim != 1 or t.size < 1:
            raise ConfigError("theta must be a non-empty vector")
        if np.any(t <= 0):
            raise ConfigError("theta entries must be > 0")
        if abs(t.sum() - 1.0) > 1e-12:
            raise ConfigError("theta must sum to 1")
        object.__setattr__(self, "theta", t)
        self.theta.setflags(write=False)

    @property
    def num_files(self) -> int:
        return self.theta.size


@dataclass(frozen=True)
class Request:
    """One user's request: (user k, file f, subfile l).

    A single slot is simulated per scenario; caching fractions and backhaul
    rates are subfile-index independent, so l stays at its drawn value without
    affecting any decision.
    """

    user: int
    file: int
    subfile: int = 0


@dataclass(frozen=True)
class Scenario:
    """One delivery snapshot: requests, channels, backhaul, noise."""

    config: SystemConfig
    requests: tuple[Request, ...]
    channels_lr: np.ndarray        # (M*Nt, |S|) complex, column per request
    channel_er: np.ndarray         # (M*Nt, Ne) complex
    backhaul_bps: np.ndarray       # (M,)
    noise_lr_w: float
    noise_er_w: float
    bs_positions_m: np.ndarray     # (M, 2)
    user_positions_m: np.ndarray   # (K, 2)
    er_position_m: np.ndarray      # (2,)
    seed: int | None = None

    def __post_init__(self):
        cfg = self.config
        n = cfg.num_bs * cfg.tx_antennas
        users = [r.user for r in self.requests]
        if len(set(users)) != len(users):
            raise ConfigError("one request per user is required")
        if len(self.requests) > cfg.num_users:
            raise ConfigError("more requests than users")
        if self.channels_lr.shape != (n, len(self.requests)):
            raise ConfigError(
                f"channels_lr must be ({n}, {len(self.requests)}), got {self.channels_lr.shape}")
        if self.channel_er.shape != (n, cfg.er_antennas):
            raise ConfigError(
                f"channel_er must be ({n}, {cfg.er_antennas}), got {self.channel_er.shape}")
        if self.backhaul_bps.shape != (cfg.num_bs,):
            raise ConfigError("backhaul_bps must have one entry per BS")
        for arr in (self.channels_lr, self.channel_er, self.backhaul_bps,
                    self.bs_positions_m, self.user_positions_m, self.er_position_m):
            arr.setflags(write=False)

    @property
    def requested_files(self) -> tuple[int, ...]:
        """Distinct requested files, ascending."""
        return tuple(sorted({r.file for r in self.requests}))

    def channel_for(self, idx: int) -> np.ndarray:
        return self.channels_lr[:, idx]


@dataclass(frozen=True)
class CacheState:
    """Fractional cache placement c[f, m] in [0, 1]."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2:
            raise ConfigError("cache matrix must be F x M")
        if np.any(c < -1e-9) or np.any(c > 1 + 1e-9):
            raise ConfigError("cache fractions must lie in [0, 1]")
        object.__setattr__(self, "c", np.clip(c, 0.0, 1.0))
        self.c.setflags(write=False)

    @property
    def num_files(self) -> int:
        return self.c.shape[0]

    @property
    def num_bs(self) -> int:
        return self.c.shape[1]


def zipf_popularity(num_files: int, exponent: float) -> PopularityProfile:
    """Zipf request distribution: theta_f proportional to f^-exponent."""
    if num_files < 1:
        raise ConfigError("num_files must be >= 1")
    if exponent <= 0:
        raise ConfigError("exponent must be > 0")
    ranks = np.arange(1, num_files + 1, dtype=float)
    w = ranks ** (-exponent)
    return PopularityProfile(w / w.sum())


def path_loss_db(distance_m: float, min_distance_m: float = 50.0) -> float:
    """Urban-macro NLOS attenuation, 128.1 + 37.6*log10(d_km).

    Distances below the minimum are clamped with a warning; the scenario
    generator never produces them, so this only guards user-supplied positions.
    """
    if distance_m < min_distance_m:
        logger.warning("distance %.1f m below minimum %.1f m; clamping",
                       distance_m, min_distance_m)
        distance_m = min_distance_m
    return 128.1 + 37.6 * math.log10(distance_m / 1000.0)


def noise_power(density_w_per_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise power over the signal bandwidth."""
    if density_w_per_hz <= 0 or bandwidth_hz <= 0:
        raise ConfigError("noise density and bandwidth must be > 0")
    return density_w_per_hz * bandwidth_hz


def rate_to_sinr_threshold(rate_bps: float, bandwidth_hz: float) -> float:
    """SINR threshold 2^(rate/bandwidth) - 1 for a rate requirement in bits/s."""
    if rate_bps < 0:
        raise ConfigError("rate must be >= 0")
    # expm1 keeps full precision for rates far below the bandwidth
    return math.expm1((rate_bps / bandwidth_hz) * math.log(2.0))


def backhaul_load_rate(config: SystemConfig, file: int | None = None) -> float:
    """Backhaul rate Q_f needed to load one subfile live during its slot."""
    return config.file_size_bits / (config.slot_duration_s * config.subfiles_per_file)


def bs_layout(num_bs: int, inter_bs_distance_m: float) -> np.ndarray:
    """Hexagonal-grid BS positions: center cell first, then rings outward."""
    positions = [(0.0, 0.0)]
    ring = 1
    while len(positions) < num_bs:
        # walk the hexagonal ring of radius `ring` cells
        corner = np.array([ring * inter_bs_distance_m, 0.0])
        angles = np.arange(6) * np.pi / 3
        pts = []
        for a in angles:
            rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
            start = rot @ corner
            step_dir = rot @ np.array([[np.cos(2 * np.pi / 3), -np.sin(2 * np.pi / 3)],
                                       [np.sin(2 * np.pi / 3), np.cos(2 * np.pi / 3)]]) @ np.array([1.0, 0.0])
            for s in range(ring):
                pts.append(start + s * inter_bs_distance_m * step_dir)
        positions.extend([tuple(p) for p in pts])
        ring += 1
    return np.array(positions[:num_bs])


def coverage_radius(config: SystemConfig) -> float:
    """Disc radius containing every cell of the layout."""
    layout = bs_layout(config.num_bs, config.inter_bs_distance_m)
    ring = float(np.max(np.linalg.norm(layout, axis=1)))
    return ring + config.inter_bs_distance_m / math.sqrt(3.0)


def rayleigh_fading(rng: np.random.Generator, size: int) -> np.ndarray:
    """I.i.d. zero-mean unit-variance circularly-symmetric complex Gaussian."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)


def draw_positions(rng: np.random.Generator, config: SystemConfig, count: int,
                   layout: np.ndarray | None = None) -> np.ndarray:
    """Uniform positions in the coverage disc, at least min_rx_distance from every BS."""
    if layout is None:
        layout = bs_layout(config.num_bs, config.inter_bs_distance_m)
    radius = coverage_radius(config)
    out = np.empty((count, 2))
    got = 0
    while got < count:
        p = rng.uniform(-radius, radius, 2)
        if p @ p > radius * radius:
            continue
        if np.min(np.linalg.norm(layout - p, axis=1)) < config.min_rx_distance_m:
            continue
        out[got] = p
        got += 1
    return out


def draw_requests(rng: np.random.Generator, popularity: PopularityProfile,
                  count: int, subfiles_per_file: int = 1) -> list[Request]:
    """One request per user, file drawn i.i.d. from the popularity profile."""
    files = rng.choice(popularity.num_files, size=count, p=popularity.theta)
    subfiles = rng.integers(0, subfiles_per_file, size=count)
    return [Request(user=k, file=int(files[k]), subfile=int(subfiles[k]))
            for k in range(count)]


def draw_backhaul(rng: np.random.Generator, config: SystemConfig) -> np.ndarray:
    caps = np.array([c for c, _ in config.backhaul_pmf])
    probs = np.array([p for _, p in config.backhaul_pmf])
    return rng.choice(caps, size=config.num_bs, p=probs)


def _channel_column(rng: np.random.Generator, config: SystemConfig,
                    layout: np.ndarray, pos: np.ndarray) -> np.ndarray:
    m, nt = config.num_bs, config.tx_antennas
    h = np.empty(m * nt, dtype=complex)
    for b in range(m):
        d = float(np.linalg.norm(layout[b] - pos))
        gain = db_to_linear(-path_loss_db(d, config.min_rx_distance_m))
        h[b * nt:(b + 1) * nt] = math.sqrt(gain) * rayleigh_fading(rng, nt)
    return h


def generate_scenario(config: SystemConfig, popularity: PopularityProfile,
                      rng_seed: int) -> Scenario:
    """Random delivery snapshot; pure function of (config, popularity, seed).

    Draw order is fixed (positions, backhaul, requests, LR channels, ER
    channel) so scenarios are reproducible bit-for-bit.
    """
    if popularity.num_files != config.num_files:
        raise ConfigError("popularity profile size must match num_files")
    rng = np.random.default_rng(rng_seed)
    layout = bs_layout(config.num_bs, config.inter_bs_distance_m)
    upos = draw_positions(rng, config, config.num_users, layout)
    epos = draw_positions(rng, config, 1, layout)[0]
    backhaul = draw_backhaul(rng, config)
    requests = draw_requests(rng, popularity, config.num_users, config.subfiles_per_file)
    h_cols = [_channel_column(rng, config, layout, upos[r.user]) for r in requests]
    g_cols = [_channel_column(rng, config, layout, epos) for _ in range(config.er_antennas)]
    noise = config.noise_power_w
    return Scenario(
        config=config,
        requests=tuple(requests),
        channels_lr=np.array(h_cols).T,
        channel_er=np.array(g_cols).T,
        backhaul_bps=backhaul,
        noise_lr_w=noise,
        noise_er_w=noise,
        bs_positions_m=layout,
        user_positions_m=upos,
        er_position_m=epos,
        seed=rng_seed,
    )


# --- configuration files ------------------------------------------------

_DB_KEYS = {
    "max_tx_power_dbm": ("max_tx_power_w", dbm_to_watts),
    "noise_density_dbm_per_hz": ("noise_density_w_per_hz", dbm_to_watts),
}


def config_from_dict(raw: dict) -> SystemConfig:
    data = dict(raw)
    for alt, (target, conv) in _DB_KEYS.items():
        if alt in data:
            if target in data:
                raise ConfigError(f"give either {alt} or {target}, not both")
            data[target] = conv(data.pop(alt))
    if "backhaul_pmf" in data:
        data["backhaul_pmf"] = tuple((float(c), float(p)) for c, p in data["backhaul_pmf"])
    known = set(SystemConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return SystemConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str) -> SystemConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must contain a mapping")
    return config_from_dict(raw)


def desk_config() -> SystemConfig:
    """Small profile: exhaustive-search oracle stays affordable."""
    return SystemConfig()


def table1_config() -> SystemConfig:
    """Full simulation profile (7-cell cluster, 4x2 antennas, 10 files)."""
    return SystemConfig(
        num_bs=7,
        num_users=5,
        num_files=10,
        tx_antennas=4,
        er_antennas=2,
        cache_capacity_bits=2000e6 * 8,
    )
