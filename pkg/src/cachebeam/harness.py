"""Monte-Carlo experiment runner: sweeps, per-scheme metrics, CSV export.

Schemes pair a caching policy with a delivery controller:

* proposed     trained cache + greedy delivery
* preference   most-popular-first cache + greedy delivery
* uniform      equal-share cache + greedy delivery
* coordinated  trained cache + single-BS association
* full-coop    no cache dependence, all BSs cooperate (backhaul ignored)
* exhaustive   trained cache + exhaustive-search delivery (tiny instances only)

Evaluation scenario seeds are `seed + index`; training seeds are
`seed + 1_000_000 + index`, keeping the streams disjoint. Power is averaged
in watts over feasible scenarios only and converted to dBm at reporting
time; the secrecy outage probability is the fraction of scenarios whose
delivery problem is infeasible.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from cachebeam import beamforming as bf
from cachebeam import caching, delivery
from cachebeam.model import (
    CacheState,
    ConfigError,
    PopularityProfile,
    Scenario,
    SystemConfig,
    generate_scenario,
    watts_to_dbm,
    zipf_popularity,
)

TRAINING_SEED_OFFSET = 1_000_000

SCHEMES = ("proposed", "preference", "uniform", "coordinated", "full-coop", "exhaustive")
_TRAINED_CACHE_SCHEMES = {"proposed", "coordinated", "exhaustive"}
SWEEP_AXES = ("cache_capacity", "tx_antennas", "er_antennas")

CSV_COLUMNS = ("scheme", "sweep_name", "sweep_value", "mean_power_dbm", "p_out",
               "mean_coop_bs", "n_feasible", "n_total", "mean_solves", "seed")


@dataclass(frozen=True)
class ExperimentSpec:
    config: SystemConfig
    sweep_name: str = "cache_capacity"
    sweep_values: tuple[float, ...] = ()      # cache capacity in BYTES, or antenna counts
    schemes: tuple[str, ...] = ("proposed", "full-coop")
    num_eval_scenarios: int = 50
    num_training_scenarios: int = 10
    seed: int = 0
    antenna_grid: tuple[tuple[int, int], ...] = ()   # (Nt, Ne) variants for Fig-3 runs
    options: bf.SolverOptions = bf.DEFAULT_OPTIONS

    def __post_init__(self):
        if self.sweep_name not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.sweep_name!r}; "
                              f"choose from {SWEEP_AXES}")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ConfigError(f"unknown schemes: {sorted(unknown)}")
        if not self.sweep_values:
            raise ConfigError("sweep_values must be non-empty")
        if self.num_eval_scenarios < 1 or self.num_training_scenarios < 1:
            raise ConfigError("scenario counts must be >= 1")
        if "exhaustive" in self.schemes:
            cfg = self.config
            bits = min(cfg.num_users, cfg.num_files) * cfg.num_bs
            if bits > delivery.EXHAUSTIVE_GUARD_BITS:
                raise ConfigError(
                    f"exhaustive scheme needs F(S)*M <= {delivery.EXHAUSTIVE_GUARD_BITS}; "
                    f"this config allows up to {bits}")


@dataclass
class MetricsRecord:
    scheme: str
    sweep_name: str
    sweep_value: float
    mean_power_w: float | None
    p_out: float
    mean_coop_bs: float | None
    n_feasible: int
    n_total: int
    mean_solves: float
    seed: int
    wall_time_s: float = 0.0

    @property
    def mean_power_dbm(self) -> float | None:
        if self.mean_power_w is None or self.mean_power_w <= 0:
            return None
        return watts_to_dbm(self.mean_power_w)


def _apply_sweep(config: SystemConfig, axis: str, value: float) -> SystemConfig:
    if axis == "cache_capacity":
        return config.replace(cache_capacity_bits=float(value) * 8.0)
    if axis == "tx_antennas":
        return config.replace(tx_antennas=int(value))
    return config.replace(er_antennas=int(value))


def train_proposed_cache(config: SystemConfig, popularity: PopularityProfile,
                         num_scenarios: int, seed: int,
                         options: bf.SolverOptions = bf.DEFAULT_OPTIONS,
                         ) -> tuple[CacheState, int]:
    """Train on feasible historical scenarios; infeasible draws are dropped
    (they carry no delivery decisions to learn from). Returns the cache and
    the number of dropped scenarios."""
    scenarios = []
    dropped = 0
    for i in range(num_scenarios):
        scen = generate_scenario(config, popularity, seed + TRAINING_SEED_OFFSET + i)
        probe = bf.build_r1(scen, np.ones((len(scen.requested_files), config.num_bs)))
        if bf.solve_r1(probe, options=options).optimal:
            scenarios.append(scen)
        else:
            dropped += 1
    if not scenarios:
        raise RuntimeError("every training scenario is infeasible; cannot train a cache")
    training = caching.TrainingSet(
        scenarios=tuple(scenarios),
        cache_capacity_bits=np.full(config.num_bs, config.cache_capacity_bits))
    result = caching.train_cache_q1(training, options=options)
    if not result.optimal:
        raise RuntimeError(f"cache training failed: {result.status} ({result.detail})")
    return result.cache, dropped


def _run_scheme(scheme: str, scenario: Scenario, caches: dict,
                options: bf.SolverOptions) -> delivery.DeliveryOutcome:
    if scheme == "proposed":
        return delivery.greedy_delivery(scenario, caches["trained"], options)
    if scheme == "preference":
        return delivery.greedy_delivery(scenario, caches["preference"], options)
    if scheme == "uniform":
        return delivery.greedy_delivery(scenario, caches["uniform"], options)
    if scheme == "coordinated":
        return delivery.coordinated_baseline(scenario, caches["trained"], options)
    if scheme == "full-coop":
        return delivery.full_coop_baseline(scenario, None, options)
    if scheme == "exhaustive":
        return delivery.exhaustive_delivery(scenario, caches["trained"], options)
    raise ConfigError(f"unknown scheme {scheme!r}")


def run_experiment(spec: ExperimentSpec) -> list[MetricsRecord]:
    """Execute the sweep; deterministic given the spec (seed included)."""
    records: list[MetricsRecord] = []
    variants = spec.antenna_grid if spec.antenna_grid else (None,)
    for value in spec.sweep_values:
        for variant in variants:
            cfg = _apply_sweep(spec.config, spec.sweep_name, value)
            label_suffix = ""
            if variant is not None:
                nt, ne = variant
                cfg = cfg.replace(tx_antennas=int(nt), er_antennas=int(ne))
                label_suffix = f" Nt={int(nt)} Ne={int(ne)}"
            pop = zipf_popularity(cfg.num_files, cfg.zipf_exponent)
            caches: dict[str, CacheState | None] = {
                "preference": caching.preference_caching(pop, cfg),
                "uniform": caching.uniform_caching(cfg),
                "trained": None,
            }
            if _TRAINED_CACHE_SCHEMES & set(spec.schemes):
                caches["trained"], _ = train_proposed_cache(
                    cfg, pop, spec.num_training_scenarios, spec.seed, spec.options)
            scenarios = [generate_scenario(cfg, pop, spec.seed + i)
                         for i in range(spec.num_eval_scenarios)]
            for scheme in spec.schemes:
                t0 = time.perf_counter()
                outcomes = [_run_scheme(scheme, s, caches, spec.options)
                            for s in scenarios]
                wall = time.perf_counter() - t0
                records.append(_aggregate(scheme + label_suffix, spec, value,
                                          outcomes, wall))
    return records


def _aggregate(label: str, spec: ExperimentSpec, value: float,
               outcomes: list[delivery.DeliveryOutcome], wall: float) -> MetricsRecord:
    feasible = [o for o in outcomes if o.feasible]
    powers = [o.total_power_w for o in feasible]
    coops = [o.plan.cooperating_bs_count() for o in feasible]
    return MetricsRecord(
        scheme=label,
        sweep_name=spec.sweep_name,
        sweep_value=float(value),
        mean_power_w=float(np.mean(powers)) if powers else None,
        p_out=1.0 - len(feasible) / len(outcomes),
        mean_coop_bs=float(np.mean(coops)) if coops else None,
        n_feasible=len(feasible),
        n_total=len(outcomes),
        mean_solves=float(np.mean([o.solve_count for o in outcomes])),
        seed=spec.seed,
        wall_time_s=wall,
    )


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".9g")


def export_results(records: list[MetricsRecord], path: str,
                   spec: ExperimentSpec | None = None) -> None:
    """Write the results table (one row per scheme and sweep value) plus a
    metadata sidecar holding the resolved configuration and timings.

    The CSV is byte-for-byte reproducible for a fixed seed; wall times live
    only in the sidecar.
    """
    if not records:
        raise ValueError("no records to export")
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        row = (r.scheme, r.sweep_name, _fmt(r.sweep_value), _fmt(r.mean_power_dbm),
               _fmt(r.p_out), _fmt(r.mean_coop_bs), _fmt(r.n_feasible),
               _fmt(r.n_total), _fmt(r.mean_solves), _fmt(r.seed))
        lines.append(",".join(row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    meta = {
        "columns": list(CSV_COLUMNS),
        "wall_time_s": {f"{r.scheme}@{_fmt(r.sweep_value)}": r.wall_time_s
                        for r in records},
    }
    if spec is not None:
        meta["config"] = asdict(spec.config)
        meta["sweep_name"] = spec.sweep_name
        meta["sweep_values"] = list(spec.sweep_values)
        meta["schemes"] = list(spec.schemes)
        meta["num_eval_scenarios"] = spec.num_eval_scenarios
        meta["num_training_scenarios"] = spec.num_training_scenarios
        meta["seed"] = spec.seed
        meta["antenna_grid"] = [list(v) for v in spec.antenna_grid]
    with open(path + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=str)
