"""Self-check battery behind the `verify` CLI subcommand: fast spot checks of
the tightness guarantee, the KKT certificates, monotonicity, and the greedy
vs. exhaustive ordering on tiny instances."""

from __future__ import annotations

import numpy as np

from cachebeam import beamforming as bf
from cachebeam import delivery, model


def _mixed_plan(rng: np.random.Generator, nf: int, m: int) -> np.ndarray:
    q = (rng.random((nf, m)) < 0.75).astype(float)
    for row in range(nf):
        if not q[row].any():
            q[row, rng.integers(m)] = 1.0
    return q


def check_rank_one(seed: int, trials: int = 30) -> tuple[bool, str]:
    cfg = model.desk_config()
    pop = model.zipf_popularity(cfg.num_files, cfg.zipf_exponent)
    rng = np.random.default_rng(seed)
    worst_ratio = 0.0
    worst_violation = 0.0
    solved = 0
    for i in range(trials):
        scen = model.generate_scenario(cfg, pop, seed + i)
        q = _mixed_plan(rng, len(scen.requested_files), cfg.num_bs)
        sol = bf.solve_r1(bf.build_r1(scen, q))
        if not sol.optimal:
            continue
        solved += 1
        bf.extract_rank1(sol)
        worst_ratio = max(worst_ratio, sol.residuals["rank1_ratio"])
        report = bf.verify_solution(scen, q, sol.w)
        worst_violation = max(worst_violation, report.max_violation)
    ok = solved > 0 and worst_ratio <= 1e-6 and worst_violation <= 1e-6
    return ok, (f"{solved}/{trials} feasible, max rank ratio {worst_ratio:.2e}, "
                f"max recovered-vector violation {worst_violation:.2e}")


def check_kkt(seed: int, trials: int = 15) -> tuple[bool, str]:
    cfg = model.desk_config()
    pop = model.zipf_popularity(cfg.num_files, cfg.zipf_exponent)
    rng = np.random.default_rng(seed + 1)
    worst = 0.0
    checked = 0
    for i in range(trials):
        scen = model.generate_scenario(cfg, pop, seed + 1000 + i)
        q = _mixed_plan(rng, len(scen.requested_files), cfg.num_bs)
        prob = bf.build_r1(scen, q)
        sol = bf.solve_r1(prob, need_duals=True,
                          options=bf.SolverOptions(reduced="never"))
        if not sol.optimal:
            continue
        cert = bf.verify_kkt(prob, sol)
        if not cert.ok(1e-6) or not np.all(cert.b_min_eig > 0):
            return False, f"certificate failed at trial {i}"
        scale = 1.0 + cert.b_norm
        worst = max(worst, float(np.max(cert.stationarity / scale)))
        checked += 1
    return checked > 0, f"{checked}/{trials} certified, worst scaled residual {worst:.2e}"


def check_lemma1(seed: int, trials: int = 25) -> tuple[bool, str]:
    cfg = model.desk_config()
    pop = model.zipf_popularity(cfg.num_files, cfg.zipf_exponent)
    rng = np.random.default_rng(seed + 2)
    checked = 0
    for i in range(trials):
        scen = model.generate_scenario(cfg, pop, seed + 2000 + i)
        nf = len(scen.requested_files)
        big = _mixed_plan(rng, nf, cfg.num_bs)
        small = big * (rng.random((nf, cfg.num_bs)) < 0.7).astype(float)
        sol_b = bf.solve_r1(bf.build_r1(scen, big))
        sol_s = bf.solve_r1(bf.build_r1(scen, small))
        if sol_b.optimal and sol_s.optimal:
            if sol_s.objective < sol_b.objective * (1 - 1e-6):
                return False, (f"monotonicity violated at trial {i}: "
                               f"{sol_s.objective} < {sol_b.objective}")
            checked += 1
    return checked > 0, f"{checked}/{trials} nested pairs ordered correctly"


def check_oracle(seed: int, trials: int = 8) -> tuple[bool, str]:
    cfg = model.desk_config()
    pop = model.zipf_popularity(cfg.num_files, cfg.zipf_exponent)
    rng = np.random.default_rng(seed + 3)
    compared = 0
    for i in range(trials):
        scen = model.generate_scenario(cfg, pop, seed + 3000 + i)
        cache = model.CacheState(
            rng.random((cfg.num_files, cfg.num_bs)) * 0.5)
        g = delivery.greedy_delivery(scen, cache)
        e = delivery.exhaustive_delivery(scen, cache)
        fc = delivery.full_coop_baseline(scen)
        co = delivery.coordinated_baseline(scen, cache)
        if g.feasible and e.feasible:
            if g.total_power_w < e.total_power_w * (1 - 1e-6):
                return False, f"greedy beat the exhaustive oracle at trial {i}"
            compared += 1
        if all(o.feasible for o in (fc, e, g, co)):
            chain = (fc.total_power_w, e.total_power_w, g.total_power_w,
                     co.total_power_w)
            if not all(chain[j] <= chain[j + 1] * (1 + 1e-6) for j in range(3)):
                return False, f"scheme ordering violated at trial {i}: {chain}"
    return compared > 0, f"{compared}/{trials} instances matched against the oracle"


def check_det_trace(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed + 4)
    for _ in range(2000):
        x = (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))) / 2
        _, _, gap = bf.det_trace_bound_check(x @ x.conj().T)
        if gap < -1e-12:
            return False, f"negative gap {gap:.2e} on a PSD matrix"
    for _ in range(300):
        a = (rng.standard_normal(5) + 1j * rng.standard_normal(5)) / 2
        _, t, gap = bf.det_trace_bound_check(np.outer(a, a.conj()))
        if abs(gap) > 1e-12 * max(1.0, t):
            return False, f"rank-1 gap {gap:.2e} not tight"
    return True, "2000 PSD and 300 rank-1 matrices within tolerance"


CHECKS = (
    ("rank-1 tightness", check_rank_one),
    ("kkt certificates", check_kkt),
    ("cooperation monotonicity", check_lemma1),
    ("greedy vs exhaustive oracle", check_oracle),
    ("det-trace bound", check_det_trace),
)


def run_verification(seed: int = 0, report=print) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        ok, detail = fn(seed)
        report(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        all_ok = all_ok and ok
    return all_ok
