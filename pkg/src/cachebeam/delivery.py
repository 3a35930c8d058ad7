"""Online delivery control: greedy cooperation formation under backhaul limits,
the exhaustive-search oracle, and the fixed-cooperation baselines.

Cooperation plans are binary matrices over (requested file, BS). A BS may
join a file's cooperative transmission only when the file is fully available
there, i.e. cached plus backhaul-loaded; the effective backhaul rate for the
pair is Q_f * (1 - c_{f,m}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from cachebeam import beamforming as bf
from cachebeam.model import CacheState, Scenario, backhaul_load_rate

BACKHAUL_TOL = 1e-9  # absolute slack (bits/s) when comparing loads against capacity


class InstanceTooLargeError(ValueError):
    """Exhaustive search refused: the plan space is beyond the guard."""


EXHAUSTIVE_GUARD_BITS = 16


@dataclass(frozen=True)
class CooperationPlan:
    """Binary cooperation indicators plus the implied backhaul picture."""

    files: tuple[int, ...]          # requested files, ascending; rows of q
    q: np.ndarray                   # (F(S), M) binary
    effective_rates: np.ndarray     # (F(S), M) backhaul rate when loading live
    cache_fractions: np.ndarray     # (F(S), M) c restricted to requested files

    def __post_init__(self):
        self.q.setflags(write=False)
        self.effective_rates.setflags(write=False)
        self.cache_fractions.setflags(write=False)

    def backhaul_load_bps(self) -> np.ndarray:
        """Per-BS load sum_f q_{f,m} * Q_{f,m}."""
        return (self.q * self.effective_rates).sum(axis=0)

    def backhaul_fractions(self) -> np.ndarray:
        """b_{f,m} = (1 - c_{f,m}) q_{f,m}, reconstructing C1."""
        return (1.0 - self.cache_fractions) * self.q

    def cooperating_bs_count(self) -> int:
        """BSs participating in at least one file's transmission."""
        if self.q.size == 0:
            return 0
        return int(self.q.max(axis=0).sum())

    def remove(self, row: int, bs: int) -> "CooperationPlan":
        q = self.q.copy()
        q[row, bs] = 0.0
        return CooperationPlan(self.files, q, np.array(self.effective_rates),
                               np.array(self.cache_fractions))


@dataclass
class DeliveryOutcome:
    plan: CooperationPlan
    beams: bf.BeamformingSolution | None
    total_power_w: float
    outage: bool
    solver_failure: bool = False
    iterations: int = 0
    solve_count: int = 0
    scheme: str = ""

    @property
    def feasible(self) -> bool:
        return not self.outage


def build_plan(scenario: Scenario, cache: CacheState | None,
               q: np.ndarray | None = None) -> CooperationPlan:
    """Plan over the scenario's requested files; q defaults to full cooperation."""
    cfg = scenario.config
    files = scenario.requested_files
    nf = len(files)
    qf = backhaul_load_rate(cfg)
    if cache is None:
        frac = np.zeros((nf, cfg.num_bs))
    else:
        if cache.c.shape != (cfg.num_files, cfg.num_bs):
            raise bf.InvalidProblemError(
                f"cache must be ({cfg.num_files}, {cfg.num_bs}), got {cache.c.shape}")
        frac = cache.c[list(files), :]
    rates = qf * (1.0 - frac)
    if q is None:
        q = np.ones((nf, cfg.num_bs))
    return CooperationPlan(files=files, q=np.asarray(q, dtype=float),
                           effective_rates=rates, cache_fractions=frac)


def violation_set(plan: CooperationPlan, scenario: Scenario) -> set[int]:
    """BS indices whose backhaul capacity the plan exceeds."""
    load = plan.backhaul_load_bps()
    cap = scenario.backhaul_bps
    return {m for m in range(cap.size) if load[m] > cap[m] + BACKHAUL_TOL}


def _solve_plan(scenario: Scenario, plan: CooperationPlan,
                options: bf.SolverOptions) -> bf.BeamformingSolution:
    return bf.solve_r1(bf.build_r1(scenario, plan.q), options=options)


def _outcome(plan, beams, scheme, *, outage, solver_failure=False,
             iterations=0, solves=0) -> DeliveryOutcome:
    power = beams.objective if (beams is not None and beams.optimal) else math.nan
    return DeliveryOutcome(plan=plan, beams=beams, total_power_w=power,
                           outage=outage, solver_failure=solver_failure,
                           iterations=iterations, solve_count=solves, scheme=scheme)


def greedy_delivery(scenario: Scenario, cache: CacheState | None,
                    options: bf.SolverOptions = bf.DEFAULT_OPTIONS,
                    exact_near_cap: bool = False) -> DeliveryOutcome:
    """Greedy cooperation formation: start from full cooperation and, while
    some BS exceeds its backhaul capacity, drop the (file, BS) pair whose
    removal costs the least extra transmit power (ties: lexicographic).

    Pairs with zero effective backhaul rate are never candidates: removing
    them cannot shrink any violation and can only raise power.

    Candidates are evaluated on the fast subspace path. An uncertified result
    there proves the candidate's true power exceeds the certificate threshold
    (~min per-BS cap), so it cannot win the argmin against any certified
    candidate. Rounds where NO candidate certifies sit within a few dB of the
    hard system power limit; by default such rounds are settled by comparing
    the subspace optima directly, and only the final plan is re-solved
    exactly. `exact_near_cap=True` instead re-solves every such candidate in
    the full space (exact Eq.-15 penalties at substantial cost).
    """
    plan = build_plan(scenario, cache)
    solves = 0
    if len(plan.files) == 0:
        return _outcome(plan, bf.BeamformingSolution(status=bf.STATUS_OPTIMAL,
                                                     objective=0.0, W=[], w=[]),
                        "greedy", outage=False)
    current = _solve_plan(scenario, plan, options)
    solves += 1
    if current.status == bf.STATUS_SOLVER_FAILURE:
        return _outcome(plan, current, "greedy", outage=True, solver_failure=True,
                        solves=solves)
    if current.status == bf.STATUS_INFEASIBLE:
        # every subset plan is infeasible too (feasible sets nest)
        return _outcome(plan, current, "greedy", outage=True, solves=solves)
    probe_options = replace(options, reduced_fallback="accept", scs_retry=False)
    threshold = options.reduced_safety * float(scenario.config.max_tx_power_w)
    iterations = 0
    while True:
        vio = violation_set(plan, scenario)
        if not vio:
            if current.optimal and not current.certified:
                # one exact solve so the reported power is not just a bound
                current = _solve_plan(scenario, plan, options)
                solves += 1
                if not current.optimal:
                    return _outcome(plan, current, "greedy", outage=True,
                                    solver_failure=current.status == bf.STATUS_SOLVER_FAILURE,
                                    iterations=iterations, solves=solves)
            return _outcome(plan, current, "greedy", outage=False,
                            iterations=iterations, solves=solves)
        candidates = [(row, m) for row in range(len(plan.files))
                      for m in sorted(vio)
                      if plan.q[row, m] == 1.0 and plan.effective_rates[row, m] > 0]
        candidates.sort(key=lambda rm: (plan.files[rm[0]], rm[1]))
        best = None
        failure_seen = False
        set_aside = []
        for row, m in candidates:
            cand_plan = plan.remove(row, m)
            cand_prob = bf.build_r1(scenario, cand_plan.q)
            if bf.power_lower_bound(cand_prob) > threshold:
                # provably worse than any certified candidate; no solve needed
                set_aside.append(cand_plan)
                continue
            sol = bf.solve_r1(cand_prob, options=probe_options)
            solves += 1
            if sol.status == bf.STATUS_SOLVER_FAILURE:
                failure_seen = True
                continue
            if not sol.certified:
                set_aside.append(cand_plan)
                continue
            if not sol.optimal:
                continue
            if best is None or sol.objective < best[0]:
                best = (sol.objective, cand_plan, sol)
        if best is None and set_aside:
            # near-cap round: every candidate provably needs more power than
            # the certificate threshold
            settle = options if exact_near_cap else probe_options
            for cand_plan in set_aside:
                sol = _solve_plan(scenario, cand_plan, settle)
                solves += 1
                if sol.status == bf.STATUS_SOLVER_FAILURE:
                    failure_seen = True
                    continue
                if not sol.optimal:
                    continue
                if best is None or sol.objective < best[0]:
                    best = (sol.objective, cand_plan, sol)
        if best is None:
            return _outcome(plan, None, "greedy", outage=True,
                            solver_failure=failure_seen,
                            iterations=iterations, solves=solves)
        _, plan, current = best
        iterations += 1


def exhaustive_delivery(scenario: Scenario, cache: CacheState | None,
                        options: bf.SolverOptions = bf.DEFAULT_OPTIONS) -> DeliveryOutcome:
    """Minimum-power plan over all backhaul-feasible binary cooperation sets.

    Plans are enumerated in descending cardinality so that any plan contained
    in an already-solved feasible plan can be skipped: the superset's power is
    a lower bound (monotonicity), so the subset cannot improve the optimum.
    """
    cfg = scenario.config
    plan0 = build_plan(scenario, cache)
    nf = len(plan0.files)
    nbits = nf * cfg.num_bs
    if nbits > EXHAUSTIVE_GUARD_BITS:
        raise InstanceTooLargeError(
            f"exhaustive search over 2^{nbits} plans refused "
            f"(guard: F(S)*M <= {EXHAUSTIVE_GUARD_BITS})")
    if nf == 0:
        return _outcome(plan0, bf.BeamformingSolution(status=bf.STATUS_OPTIMAL,
                                                      objective=0.0, W=[], w=[]),
                        "exhaustive", outage=False)
    qos_positive = scenario.config.sinr_threshold_qos > 0
    masks = sorted(range(2 ** nbits), key=lambda b: (-bin(b).count("1"), b))
    solved_feasible: list[int] = []
    best = None
    solves = 0
    failure_seen = False
    for mask in masks:
        q = np.array([[float((mask >> (row * cfg.num_bs + m)) & 1)
                       for m in range(cfg.num_bs)] for row in range(nf)])
        plan = build_plan(scenario, cache, q)
        if violation_set(plan, scenario):
            continue
        if qos_positive and np.any(q.sum(axis=1) == 0):
            continue  # a requested file with no transmitter cannot meet its QoS
        if any((mask | sup) == sup for sup in solved_feasible):
            continue  # dominated by a solved feasible superset
        sol = _solve_plan(scenario, plan, options)
        solves += 1
        if sol.status == bf.STATUS_SOLVER_FAILURE:
            failure_seen = True
            continue
        if not sol.optimal:
            continue
        solved_feasible.append(mask)
        if best is None or sol.objective < best[0]:
            best = (sol.objective, plan, sol)
    if best is None:
        return _outcome(plan0, None, "exhaustive", outage=True,
                        solver_failure=failure_seen, solves=solves)
    _, plan, sol = best
    return _outcome(plan, sol, "exhaustive", outage=False, solves=solves)


def coordinated_baseline(scenario: Scenario, cache: CacheState | None,
                         options: bf.SolverOptions = bf.DEFAULT_OPTIONS) -> DeliveryOutcome:
    """Single-BS association: each file is served by the nearest BS to its
    requester that can absorb the load; residual backhaul is consumed in
    user-index order.
    """
    cfg = scenario.config
    plan = build_plan(scenario, cache, np.zeros((len(scenario.requested_files),
                                                 cfg.num_bs)))
    if len(plan.files) == 0:
        return _outcome(plan, bf.BeamformingSolution(status=bf.STATUS_OPTIMAL,
                                                     objective=0.0, W=[], w=[]),
                        "coordinated", outage=False)
    q = np.array(plan.q)
    residual = scenario.backhaul_bps.astype(float).copy()
    for req in sorted(scenario.requests, key=lambda r: r.user):
        row = plan.files.index(req.file)
        if q[row].any():
            continue  # file already associated by an earlier request
        upos = scenario.user_positions_m[req.user]
        order = sorted(range(cfg.num_bs),
                       key=lambda m: (float(np.linalg.norm(scenario.bs_positions_m[m] - upos)), m))
        chosen = None
        for m in order:
            need = plan.effective_rates[row, m]
            if need <= residual[m] + BACKHAUL_TOL:
                chosen = m
                break
        if chosen is None:
            return _outcome(plan, None, "coordinated", outage=True)
        q[row, chosen] = 1.0
        residual[chosen] -= plan.effective_rates[row, chosen]
    plan = CooperationPlan(plan.files, q, np.array(plan.effective_rates),
                           np.array(plan.cache_fractions))
    sol = _solve_plan(scenario, plan, options)
    if sol.status == bf.STATUS_SOLVER_FAILURE:
        return _outcome(plan, sol, "coordinated", outage=True, solver_failure=True,
                        solves=1)
    return _outcome(plan, sol, "coordinated", outage=not sol.optimal, solves=1)


def full_coop_baseline(scenario: Scenario, cache: CacheState | None = None,
                       options: bf.SolverOptions = bf.DEFAULT_OPTIONS) -> DeliveryOutcome:
    """All BSs cooperate for every file; backhaul constraints are dropped.

    By monotonicity this lower-bounds every backhaul-respecting scheme, and
    its infeasibility implies infeasibility of all of them.
    """
    plan = build_plan(scenario, cache)
    if len(plan.files) == 0:
        return _outcome(plan, bf.BeamformingSolution(status=bf.STATUS_OPTIMAL,
                                                     objective=0.0, W=[], w=[]),
                        "full-coop", outage=False)
    sol = _solve_plan(scenario, plan, options)
    if sol.status == bf.STATUS_SOLVER_FAILURE:
        return _outcome(plan, sol, "full-coop", outage=True, solver_failure=True,
                        solves=1)
    return _outcome(plan, sol, "full-coop", outage=not sol.optimal, solves=1)
