"""Offline cache training over historical scenarios, plus caching baselines.

Training solves one joint convex program: shared fractional placements c,
per-scenario continuous cooperation/backhaul auxiliaries (q, b), and lifted
beamforming matrices, minimizing the average transmit power subject to the
cache capacity, the average backhaul budget, the availability coupling
c + b >= q, and every scenario's delivery constraints.

When per-BS power caps dwarf the delivered powers, the coupling exerts almost
no pressure on c (q* ~ blockpower/P_max is tiny), leaving a large flat face of
optimal placements. The trainer therefore finishes with a deterministic
polish: holding the auxiliaries and beams fixed, c is pushed to the
demand-weighted corner of the optimal face (a per-BS fractional knapsack),
which preserves optimality of the returned tuple while making the placement
useful to the binary online stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from cachebeam import beamforming as bf
from cachebeam.model import (
    CacheState,
    ConfigError,
    PopularityProfile,
    Scenario,
    SystemConfig,
    backhaul_load_rate,
)


@dataclass(frozen=True)
class TrainingSet:
    scenarios: tuple[Scenario, ...]
    cache_capacity_bits: np.ndarray      # (M,)

    def __post_init__(self):
        if len(self.scenarios) < 1:
            raise ConfigError("training requires at least one scenario")
        cfg = self.scenarios[0].config
        if any(s.config != cfg for s in self.scenarios):
            raise ConfigError("all training scenarios must share one config")
        cap = np.asarray(self.cache_capacity_bits, dtype=float)
        if cap.shape != (cfg.num_bs,):
            raise ConfigError("one cache capacity per BS is required")
        object.__setattr__(self, "cache_capacity_bits", cap)
        cap.setflags(write=False)

    @property
    def config(self) -> SystemConfig:
        return self.scenarios[0].config

    @property
    def num_scenarios(self) -> int:
        return len(self.scenarios)

    def average_backhaul_bps(self) -> np.ndarray:
        return np.mean([s.backhaul_bps for s in self.scenarios], axis=0)


def make_training_set(config: SystemConfig, popularity: PopularityProfile,
                      num_scenarios: int, base_seed: int) -> TrainingSet:
    from cachebeam.model import generate_scenario

    scenarios = tuple(generate_scenario(config, popularity, base_seed + i)
                      for i in range(num_scenarios))
    return TrainingSet(scenarios=scenarios,
                       cache_capacity_bits=np.full(config.num_bs,
                                                   config.cache_capacity_bits))


@dataclass
class CacheTrainingResult:
    status: str
    cache: CacheState | None
    average_power_w: float | None
    q_aux: list[np.ndarray] = field(default_factory=list)   # per scenario, (F(S), M)
    b_aux: list[np.ndarray] = field(default_factory=list)
    scenario_power_w: list[float] = field(default_factory=list)
    detail: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == bf.STATUS_OPTIMAL


def _scenario_blocks(scen: Scenario, reduced: bool):
    """Per-request lifted variables plus the data needed to constrain them."""
    cfg = scen.config
    s = len(scen.requests)
    n = cfg.num_bs * cfg.tx_antennas
    ne = cfg.er_antennas
    h = scen.channels_lr / math.sqrt(scen.noise_lr_w)
    g = scen.channel_er / math.sqrt(scen.noise_er_w)
    if reduced:
        basis = bf.orthonormal_basis(
            [h[:, j] for j in range(s)] + [g[:, j] for j in range(ne)])
    else:
        basis = np.eye(n, dtype=complex)
    r = basis.shape[1]
    xs = [cp.Variable((2 * r, 2 * r), PSD=True) for _ in range(s)]
    return xs, basis, h, g


def train_cache_q1(training: TrainingSet,
                   options: bf.SolverOptions = bf.DEFAULT_OPTIONS,
                   reduced: str = "auto",
                   polish: bool = True,
                   fixed_cache: CacheState | None = None) -> CacheTrainingResult:
    """Joint cache training: minimize the average transmit power over the
    training scenarios subject to capacity, average-backhaul, availability,
    and per-scenario QoS/secrecy constraints.

    Returns the shared placement (the lifted matrices need not be rank-1
    here; only c is consumed downstream). `reduced` selects the subspace
    restriction for the lifted blocks: "auto" enables it above desk size,
    where cap slackness makes the restriction lossless. `fixed_cache` pins
    the placement instead of optimizing it (baseline comparisons).
    """
    cfg = training.config
    omega = training.num_scenarios
    if reduced == "auto":
        n = cfg.num_bs * cfg.tx_antennas
        reduced = "always" if n > 12 or omega * cfg.num_users > 80 else "never"
    use_reduced = reduced == "always"

    qf = backhaul_load_rate(cfg)
    kappa_req = cfg.sinr_threshold_qos
    kappa_tol = cfg.sinr_threshold_secrecy
    p_max = cfg.max_tx_power_w
    nt = cfg.tx_antennas
    ne = cfg.er_antennas

    hopeless = [k for k, scen in enumerate(training.scenarios)
                if bf.power_lower_bound(
                    bf.build_r1(scen, np.ones((len(scen.requested_files), cfg.num_bs))))
                > cfg.num_bs * p_max]
    if hopeless:
        return CacheTrainingResult(
            status=bf.STATUS_INFEASIBLE, cache=None, average_power_w=None,
            detail=("infeasible QoS/secrecy blocks in training scenarios "
                    f"{hopeless} (power lower bound exceeds the aggregate caps)"))

    # shared power scale across all scenarios keeps the lifted blocks O(1)
    logs = []
    for scen in training.scenarios:
        hn = scen.channels_lr / math.sqrt(scen.noise_lr_w)
        for i in range(len(scen.requests)):
            gain = float(np.vdot(hn[:, i], hn[:, i]).real)
            if kappa_req > 0 and gain > 0:
                logs.append(math.log(kappa_req / gain))
    scale = math.exp(np.mean(logs)) if logs else 1.0
    root = math.sqrt(scale)

    if fixed_cache is not None:
        c = cp.Constant(fixed_cache.c)
        cons = []
    else:
        c = cp.Variable((cfg.num_files, cfg.num_bs))
        cons = [c >= 0, c <= 1]
    # C2: per-BS cache capacity
    cons.append(cp.sum(c, axis=0) * cfg.file_size_bits
                <= training.cache_capacity_bits)

    q_vars, b_vars, per_scen_power, per_scen_files = [], [], [], []
    backhaul_loads = []
    for scen in training.scenarios:
        files = scen.requested_files
        nf = len(files)
        s = len(scen.requests)
        xs, basis, h, g = _scenario_blocks(scen, use_reduced)
        qv = cp.Variable((nf, cfg.num_bs), nonneg=True)
        bv = cp.Variable((nf, cfg.num_bs), nonneg=True)
        cons += [qv <= 1, bv <= 1]
        # availability coupling: cached plus loaded fraction covers cooperation
        for row, f in enumerate(files):
            cons.append(c[f, :] + bv[row, :] >= qv[row, :])
        row_of = {f: i for i, f in enumerate(files)}
        # per-BS power expressions through the (possibly reduced) basis
        for m in range(cfg.num_bs):
            idx = np.arange(m * nt, (m + 1) * nt)
            sel = basis[idx, :]
            coeff = bf.embed_hermitian(sel.conj().T @ sel)
            blocks = [0.5 * cp.sum(cp.multiply(xs[i], coeff)) for i in range(s)]
            for i, req in enumerate(scen.requests):
                # C4 with the continuous cooperation fraction as power-cap multiplier
                cons.append(blocks[i] <= qv[row_of[req.file], m] * p_max / scale)
            cons.append(sum(blocks) <= p_max / scale)
        for i in range(s):
            if kappa_req > 0:
                hk = root * (basis.conj().T @ h[:, i])
                hk_outer = bf.embed_hermitian(np.outer(hk, hk.conj()))
                own = 0.5 * cp.sum(cp.multiply(xs[i], hk_outer))
                intf = sum(0.5 * cp.sum(cp.multiply(xs[j], hk_outer))
                           for j in range(s) if j != i)
                cons.append(own / kappa_req - intf >= 1.0)
            if math.isfinite(kappa_tol):
                gk = bf.embed_rect(root * (basis.conj().T @ g))
                cons.append(kappa_tol * np.eye(2 * ne) - gk.T @ xs[i] @ gk >> 0)
        q_vars.append(qv)
        b_vars.append(bv)
        per_scen_files.append(files)
        per_scen_power.append(0.5 * sum(cp.trace(x) for x in xs))
        backhaul_loads.append(cp.sum(bv, axis=0) * qf)
    # average backhaul budget
    cons.append(sum(backhaul_loads) / omega
                <= np.asarray(training.average_backhaul_bps()))
    objective = sum(per_scen_power) / omega
    prob = cp.Problem(cp.Minimize(objective), cons)
    raw = bf._solve_cvxpy(prob, options)
    status = bf._status_from_cvxpy(raw)
    if status != bf.STATUS_OPTIMAL:
        detail = str(raw)
        if status == bf.STATUS_INFEASIBLE:
            detail = _diagnose_infeasible(training, options)
        return CacheTrainingResult(status=status, cache=None, average_power_w=None,
                                   detail=detail)

    c_val = np.clip(np.asarray(c.value), 0.0, 1.0)
    q_aux = [np.clip(np.asarray(v.value), 0.0, 1.0) for v in q_vars]
    b_aux = [np.clip(np.asarray(v.value), 0.0, 1.0) for v in b_vars]
    powers = [scale * float(p.value) for p in per_scen_power]
    if polish and fixed_cache is None:
        c_val = _polish_placement(training, c_val, q_aux, b_aux, per_scen_files)
    return CacheTrainingResult(
        status=bf.STATUS_OPTIMAL,
        cache=CacheState(c_val),
        average_power_w=scale * float(prob.value),
        q_aux=q_aux,
        b_aux=b_aux,
        scenario_power_w=powers,
    )


def _diagnose_infeasible(training: TrainingSet, options: bf.SolverOptions) -> str:
    bad = []
    for k, scen in enumerate(training.scenarios):
        q = np.ones((len(scen.requested_files), scen.config.num_bs))
        sol = bf.solve_r1(bf.build_r1(scen, q), options=options)
        if not sol.optimal:
            bad.append(k)
    if bad:
        return ("infeasible QoS/secrecy blocks in training scenarios "
                f"{bad} (full cooperation already fails there)")
    return "joint problem infeasible, but every scenario is feasible alone"


def _polish_placement(training: TrainingSet, c_val: np.ndarray,
                      q_aux: list[np.ndarray], b_aux: list[np.ndarray],
                      per_scen_files: list[tuple[int, ...]]) -> np.ndarray:
    """Deterministic corner of the optimal c-face: keep c above every
    scenario's q - b requirement, then fill leftover capacity toward the most
    requested files."""
    cfg = training.config
    floor = np.zeros_like(c_val)
    for files, qv, bv in zip(per_scen_files, q_aux, b_aux):
        for row, f in enumerate(files):
            need = np.clip(qv[row] - bv[row], 0.0, 1.0)
            floor[f] = np.maximum(floor[f], need)
    demand = np.zeros(cfg.num_files)
    for scen in training.scenarios:
        for req in scen.requests:
            demand[req.file] += 1.0
    order = sorted(range(cfg.num_files), key=lambda f: (-demand[f], f))
    out = np.array(floor)
    for m in range(cfg.num_bs):
        used = float(np.sum(out[:, m]) * cfg.file_size_bits)
        budget = float(training.cache_capacity_bits[m]) - used
        for f in order:
            if budget <= 0:
                break
            room = (1.0 - out[f, m]) * cfg.file_size_bits
            take = min(room, budget)
            out[f, m] += take / cfg.file_size_bits
            budget -= take
    return np.clip(out, 0.0, 1.0)


def preference_caching(popularity: PopularityProfile,
                       config: SystemConfig) -> CacheState:
    """Most-popular-first placement: fill whole files in descending request
    probability until the capacity runs out, then one fractional file.
    Ties break toward the higher file index."""
    if popularity.num_files != config.num_files:
        raise ConfigError("popularity profile size must match num_files")
    order = sorted(range(config.num_files),
                   key=lambda f: (-popularity.theta[f], -f))
    col = np.zeros(config.num_files)
    remaining = config.cache_capacity_bits
    for f in order:
        if remaining <= 0:
            break
        frac = min(1.0, remaining / config.file_size_bits)
        col[f] = frac
        remaining -= frac * config.file_size_bits
    return CacheState(np.tile(col[:, None], (1, config.num_bs)))


def uniform_caching(config: SystemConfig) -> CacheState:
    """Equal share per file: c_f * V_f = min(C, sum V) / F."""
    share = min(config.cache_capacity_bits, config.library_bits) / config.num_files
    frac = min(1.0, share / config.file_size_bits)
    return CacheState(np.full((config.num_files, config.num_bs), frac))


def cache_feasibility(cache: CacheState, config: SystemConfig,
                      capacity_bits: np.ndarray | None = None) -> tuple[bool, np.ndarray]:
    """Per-BS capacity slack; feasible when no BS is oversubscribed."""
    cap = (np.full(config.num_bs, config.cache_capacity_bits)
           if capacity_bits is None else np.asarray(capacity_bits, dtype=float))
    used = cache.c.sum(axis=0) * config.file_size_bits
    slack = cap - used
    feasible = bool(np.all(slack >= -1e-9 * np.maximum(cap, 1.0)))
    return feasible, slack


# --- cache state files ------------------------------------------------------


def save_cache(cache: CacheState, config: SystemConfig, path: str) -> None:
    """Plain text matrix (F rows, M columns) with the config hash in the header."""
    lines = [
        "# cachebeam cache state",
        f"# config_hash: {config.config_hash()}",
        f"# files: {cache.num_files}  bs: {cache.num_bs}",
    ]
    for row in cache.c:
        lines.append(" ".join(format(v, ".17g") for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_cache(path: str, config: SystemConfig | None = None) -> CacheState:
    """Load a cache file; when a config is given, its hash must match."""
    header_hash = None
    rows = []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "config_hash:" in line:
                        header_hash = line.split("config_hash:")[1].strip()
                    continue
                rows.append([float(tok) for tok in line.split()])
    except FileNotFoundError as exc:
        raise ConfigError(f"cache file not found: {path}") from exc
    except ValueError as exc:
        raise ConfigError(f"malformed cache file {path}: {exc}") from exc
    if not rows:
        raise ConfigError(f"cache file {path} holds no data rows")
    if config is not None:
        if header_hash != config.config_hash():
            raise ConfigError(
                f"cache file {path} was produced under a different config "
                f"(hash {header_hash}, expected {config.config_hash()})")
        expected = (config.num_files, config.num_bs)
        if (len(rows), len(rows[0])) != expected:
            raise ConfigError(f"cache file {path} has shape {(len(rows), len(rows[0]))}, "
                              f"expected {expected}")
    return CacheState(np.array(rows))
