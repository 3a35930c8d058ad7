import math

import numpy as np
import pytest

from cachebeam import beamforming as bf
from cachebeam import delivery, model
from cachebeam.delivery import (
    InstanceTooLargeError,
    build_plan,
    coordinated_baseline,
    exhaustive_delivery,
    full_coop_baseline,
    greedy_delivery,
    violation_set,
)
from cachebeam.model import CacheState
from conftest import random_complex, synthetic_scenario


def uniform_cache(cfg, frac):
    return CacheState(np.full((cfg.num_files, cfg.num_bs), float(frac)))


def scenario_with_backhaul(cfg, pop, seed, backhaul):
    s = model.generate_scenario(cfg, pop, seed)
    return model.Scenario(
        config=cfg, requests=s.requests,
        channels_lr=np.array(s.channels_lr), channel_er=np.array(s.channel_er),
        backhaul_bps=np.asarray(backhaul, dtype=float),
        noise_lr_w=s.noise_lr_w, noise_er_w=s.noise_er_w,
        bs_positions_m=np.array(s.bs_positions_m),
        user_positions_m=np.array(s.user_positions_m),
        er_position_m=np.array(s.er_position_m), seed=seed)


class TestViolationSet:
    def test_fully_cached_never_violates(self, desk_cfg, desk_pop):
        scen = scenario_with_backhaul(desk_cfg, desk_pop, 0, [0.0] * desk_cfg.num_bs)
        plan = build_plan(scen, uniform_cache(desk_cfg, 1.0))
        assert violation_set(plan, scen) == set()

    def test_zero_backhaul_uncached_violates(self, desk_cfg, desk_pop):
        scen = scenario_with_backhaul(desk_cfg, desk_pop, 1, [0.0] * desk_cfg.num_bs)
        plan = build_plan(scen, uniform_cache(desk_cfg, 0.5))
        assert violation_set(plan, scen) == set(range(desk_cfg.num_bs))

    def test_half_cached_two_files_fit_1p5_mbps(self, desk_pop):
        # two files at Q_f*(1-0.5) = 0.74 Mbps each sum to 1.48 <= 1.5 Mbps
        cfg = model.desk_config()
        assert abs(model.backhaul_load_rate(cfg) - 4e9 / 2700.0) < 1e-9
        pop = model.zipf_popularity(cfg.num_files, cfg.zipf_exponent)
        for seed in range(30):
            scen = scenario_with_backhaul(cfg, pop, seed, [1.5e6] * cfg.num_bs)
            if len(scen.requested_files) == 2:
                plan = build_plan(scen, uniform_cache(cfg, 0.5))
                assert violation_set(plan, scen) == set()
                # but with no cache the same load doubles and violates
                plan0 = build_plan(scen, None)
                assert violation_set(plan0, scen) == set(range(cfg.num_bs))
                return
        pytest.fail("no two-file scenario found")


class TestGreedy:
    def test_unconstrained_equals_full_coop(self, desk_cfg, desk_pop):
        scen = scenario_with_backhaul(desk_cfg, desk_pop, 2, [1e9] * desk_cfg.num_bs)
        g = greedy_delivery(scen, None)
        fc = full_coop_baseline(scen)
        assert g.feasible and fc.feasible
        assert g.iterations == 0
        assert np.array_equal(g.plan.q, np.ones_like(g.plan.q))
        assert abs(g.total_power_w - fc.total_power_w) < 1e-8 * fc.total_power_w

    def test_everything_cached_equals_unconstrained(self, desk_cfg, desk_pop):
        scen = scenario_with_backhaul(desk_cfg, desk_pop, 3, [0.0] * desk_cfg.num_bs)
        g = greedy_delivery(scen, uniform_cache(desk_cfg, 1.0))
        fc = full_coop_baseline(scen)
        assert g.feasible and g.iterations == 0
        assert abs(g.total_power_w - fc.total_power_w) < 1e-8 * fc.total_power_w

    def test_never_violates_backhaul(self, desk_cfg, desk_pop):
        for seed in range(6):
            scen = model.generate_scenario(desk_cfg, desk_pop, 50 + seed)
            out = greedy_delivery(scen, uniform_cache(desk_cfg, 0.3))
            if out.feasible:
                assert violation_set(out.plan, scen) == set()
                removed = out.plan.q.size - int(out.plan.q.sum())
                assert out.iterations == removed
                assert out.iterations <= out.plan.q.size

    def test_greedy_at_least_exhaustive(self, desk_cfg, desk_pop):
        gaps = []
        for seed in range(8):
            scen = scenario_with_backhaul(
                desk_cfg, desk_pop, 60 + seed,
                np.random.default_rng(seed).choice([0.0, 1.6e6], size=desk_cfg.num_bs))
            cache = uniform_cache(desk_cfg, 0.2)
            g = greedy_delivery(scen, cache)
            e = exhaustive_delivery(scen, cache)
            if g.feasible and e.feasible:
                assert g.total_power_w >= e.total_power_w * (1 - 1e-6)
                gaps.append(g.total_power_w / e.total_power_w - 1.0)
        assert gaps, "no feasible instances sampled"


class TestExhaustive:
    def test_unconstrained_selects_full_cooperation(self, desk_cfg, desk_pop):
        scen = scenario_with_backhaul(desk_cfg, desk_pop, 9, [1e9] * desk_cfg.num_bs)
        e = exhaustive_delivery(scen, None)
        assert e.feasible
        assert np.array_equal(e.plan.q, np.ones_like(e.plan.q))

    def test_impossible_qos_gives_outage(self, desk_pop):
        # SINR demand of 2^25 needs ~kW transmit power, far beyond the 46 dBm caps
        cfg = model.desk_config().replace(qos_rate_bps=2.5e8, secrecy_tolerance_bps=150e3)
        pop = model.zipf_popularity(cfg.num_files, cfg.zipf_exponent)
        scen = scenario_with_backhaul(cfg, pop, 10, [1e9] * cfg.num_bs)
        e = exhaustive_delivery(scen, None)
        assert e.outage and not e.solver_failure

    def test_zero_backhaul_bs_excluded(self):
        cfg = model.SystemConfig(num_bs=2, num_users=1, num_files=1, tx_antennas=2,
                                 er_antennas=1)
        rng = np.random.default_rng(12)
        scen = synthetic_scenario(
            1e-5 * random_complex(rng, 4, 1), 1e-5 * random_complex(rng, 4, 1), cfg,
            files=[0], noise_w=cfg.noise_power_w,
            backhaul_bps=np.array([0.0, 1e9]))
        e = exhaustive_delivery(scen, None)
        assert e.feasible
        np.testing.assert_array_equal(e.plan.q, [[0.0, 1.0]])

    def test_guard_rejects_large_instances(self):
        cfg = model.table1_config()
        pop = model.zipf_popularity(cfg.num_files, cfg.zipf_exponent)
        scen = model.generate_scenario(cfg, pop, 0)
        if len(scen.requested_files) * cfg.num_bs > 16:
            with pytest.raises(InstanceTooLargeError):
                exhaustive_delivery(scen, None)


class TestCoordinated:
    def test_equidistant_tie_breaks_to_first_bs(self):
        cfg = model.SystemConfig(num_bs=2, num_users=1, num_files=1, tx_antennas=2,
                                 er_antennas=1)
        rng = np.random.default_rng(13)
        scen = synthetic_scenario(
            1e-5 * random_complex(rng, 4, 1), 1e-5 * random_complex(rng, 4, 1), cfg,
            files=[0], noise_w=cfg.noise_power_w,
            backhaul_bps=np.array([1e9, 1e9]))
        # place the user halfway between the two BSs
        upos = np.array(scen.user_positions_m)
        upos[0] = 0.5 * (scen.bs_positions_m[0] + scen.bs_positions_m[1])
        scen = model.Scenario(
            config=cfg, requests=scen.requests,
            channels_lr=np.array(scen.channels_lr), channel_er=np.array(scen.channel_er),
            backhaul_bps=np.array(scen.backhaul_bps),
            noise_lr_w=scen.noise_lr_w, noise_er_w=scen.noise_er_w,
            bs_positions_m=np.array(scen.bs_positions_m),
            user_positions_m=upos, er_position_m=np.array(scen.er_position_m))
        out = coordinated_baseline(scen, None)
        assert out.feasible
        np.testing.assert_array_equal(out.plan.q, [[1.0, 0.0]])

    def test_no_backhaul_no_cache_outage(self, desk_cfg, desk_pop):
        scen = scenario_with_backhaul(desk_cfg, desk_pop, 14, [0.0] * desk_cfg.num_bs)
        out = coordinated_baseline(scen, None)
        assert out.outage

    def test_power_at_least_greedy(self, desk_cfg, desk_pop):
        compared = 0
        for seed in range(6):
            scen = model.generate_scenario(desk_cfg, desk_pop, 70 + seed)
            cache = uniform_cache(desk_cfg, 0.5)
            c = coordinated_baseline(scen, cache)
            g = greedy_delivery(scen, cache)
            if c.feasible and g.feasible:
                assert c.total_power_w >= g.total_power_w * (1 - 1e-6)
                compared += 1
        assert compared >= 3


class TestFullCoop:
    def test_lower_bounds_greedy(self, desk_cfg, desk_pop):
        for seed in range(6):
            scen = model.generate_scenario(desk_cfg, desk_pop, 80 + seed)
            fc = full_coop_baseline(scen)
            g = greedy_delivery(scen, uniform_cache(desk_cfg, 0.4))
            if fc.feasible and g.feasible:
                assert fc.total_power_w <= g.total_power_w * (1 + 1e-6)

    def test_outage_nests(self, desk_pop):
        cfg = model.desk_config().replace(qos_rate_bps=2.5e8, secrecy_tolerance_bps=150e3)
        pop = model.zipf_popularity(cfg.num_files, cfg.zipf_exponent)
        scen = model.generate_scenario(cfg, pop, 15)
        fc = full_coop_baseline(scen)
        assert fc.outage
        assert greedy_delivery(scen, None).outage
        assert coordinated_baseline(scen, None).outage
        assert exhaustive_delivery(scen, None).outage


class TestLemma1Monotonicity:
    def test_nested_plans(self, desk_cfg, desk_pop):
        rng = np.random.default_rng(16)
        checked = 0
        for seed in range(10):
            scen = model.generate_scenario(desk_cfg, desk_pop, 90 + seed)
            nf = len(scen.requested_files)
            big = (rng.random((nf, desk_cfg.num_bs)) < 0.8).astype(float)
            small = big * (rng.random((nf, desk_cfg.num_bs)) < 0.7).astype(float)
            sol_big = bf.solve_r1(bf.build_r1(scen, big))
            sol_small = bf.solve_r1(bf.build_r1(scen, small))
            if sol_big.optimal and sol_small.optimal:
                assert sol_small.objective >= sol_big.objective * (1 - 1e-6)
                checked += 1
        assert checked >= 5


class TestPlanAccounting:
    def test_backhaul_fraction_reconstruction(self, desk_cfg, desk_pop):
        scen = model.generate_scenario(desk_cfg, desk_pop, 17)
        cache = uniform_cache(desk_cfg, 0.25)
        plan = build_plan(scen, cache)
        b = plan.backhaul_fractions()
        assert np.all((b >= 0) & (b <= 1))
        np.testing.assert_allclose(b, 0.75 * plan.q)

    def test_coop_bs_count(self, desk_cfg, desk_pop):
        scen = model.generate_scenario(desk_cfg, desk_pop, 18)
        plan = build_plan(scen, None)
        assert plan.cooperating_bs_count() == desk_cfg.num_bs
        q = np.zeros_like(plan.q)
        q[0, 1] = 1.0
        assert build_plan(scen, None, q).cooperating_bs_count() == 1
