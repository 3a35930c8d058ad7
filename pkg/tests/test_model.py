import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachebeam import model
from cachebeam.model import (
    ConfigError,
    SystemConfig,
    backhaul_load_rate,
    dbm_to_watts,
    desk_config,
    generate_scenario,
    noise_power,
    path_loss_db,
    rate_to_sinr_threshold,
    table1_config,
    watts_to_dbm,
    zipf_popularity,
)


class TestZipf:
    def test_single_file(self):
        assert zipf_popularity(1, 2.0).theta.tolist() == [1.0]

    def test_two_files_unit_exponent(self):
        theta = zipf_popularity(2, 1.0).theta
        np.testing.assert_allclose(theta, [2 / 3, 1 / 3], rtol=1e-15)

    def test_ten_files_table1_exponent(self):
        # independent oracle: direct summation of f^-1.1
        weights = [f ** -1.1 for f in range(1, 11)]
        expected_first = weights[0] / sum(weights)
        theta = zipf_popularity(10, 1.1).theta
        assert abs(theta[0] - expected_first) < 1e-12
        assert abs(expected_first - 0.373) < 5e-4

    def test_zero_files_rejected(self):
        with pytest.raises(ConfigError):
            zipf_popularity(0, 1.1)

    @given(st.integers(2, 50), st.floats(0.05, 3.0))
    @settings(max_examples=50, deadline=None)
    def test_normalized_and_strictly_decreasing(self, f, kappa):
        theta = zipf_popularity(f, kappa).theta
        assert abs(theta.sum() - 1.0) < 1e-12
        assert np.all(np.diff(theta) < 0)


class TestPathLoss:
    def test_reference_distances(self):
        assert abs(path_loss_db(1000.0) - 128.1) < 1e-9
        assert abs(path_loss_db(100.0) - (128.1 - 37.6)) < 1e-9

    def test_monotone(self):
        assert path_loss_db(500.0) < path_loss_db(501.0)

    def test_clamps_below_minimum(self, caplog):
        with caplog.at_level("WARNING"):
            pl = path_loss_db(10.0, min_distance_m=50.0)
        assert pl == path_loss_db(50.0)
        assert "clamping" in caplog.text

    @given(st.floats(50.0, 5000.0), st.floats(50.0, 5000.0))
    @settings(max_examples=50, deadline=None)
    def test_monotone_property(self, d1, d2):
        if d1 <= d2:
            assert path_loss_db(d1) <= path_loss_db(d2)


class TestNoisePower:
    def test_table1_composition(self):
        w = noise_power(dbm_to_watts(-172.6), 10e6)
        assert abs(watts_to_dbm(w) - (-102.6)) < 1e-9

    def test_identity_bandwidth(self):
        assert noise_power(3.5e-21, 1.0) == 3.5e-21

    def test_minus_174_reference(self):
        w = noise_power(dbm_to_watts(-174.0), 10e6)
        assert abs(watts_to_dbm(w) - (-104.0)) < 1e-9


class TestSinrThreshold:
    def test_zero_rate(self):
        assert rate_to_sinr_threshold(0.0, 10e6) == 0.0

    def test_table1_qos(self):
        assert abs(rate_to_sinr_threshold(1.65e6, 10e6) - (2 ** 0.165 - 1)) < 1e-12
        assert abs(rate_to_sinr_threshold(1.65e6, 10e6) - 0.1212) < 2e-4

    def test_table1_secrecy(self):
        assert abs(rate_to_sinr_threshold(150e3, 10e6) - 0.01045) < 2e-5

    @given(st.floats(1e-3, 5e7), st.floats(1e5, 1e8))
    @settings(max_examples=50, deadline=None)
    def test_inverts_exactly(self, rate, bw):
        k = rate_to_sinr_threshold(rate, bw)
        back = bw * math.log1p(k) / math.log(2.0)
        assert abs(back - rate) <= 1e-9 * rate

    def test_monotone_in_rate(self):
        rates = np.linspace(0, 5e6, 20)
        ks = [rate_to_sinr_threshold(r, 10e6) for r in rates]
        assert np.all(np.diff(ks) > 0)


class TestBackhaulLoadRate:
    def test_table1_value(self):
        cfg = table1_config()
        q = backhaul_load_rate(cfg)
        # 4e9 bits over tau*L = 2700 s, the paper's ~1.5 Mbps figure
        assert abs(q - 4e9 / 2700.0) < 1e-9
        assert abs(q - 1.48e6) < 4e3

    def test_zero_size(self):
        cfg = desk_config().replace(file_size_bits=1e-12)
        assert backhaul_load_rate(cfg) < 1e-12

    def test_linear_in_size(self):
        cfg = desk_config()
        assert abs(backhaul_load_rate(cfg.replace(file_size_bits=2 * cfg.file_size_bits))
                   - 2 * backhaul_load_rate(cfg)) < 1e-9


class TestConfig:
    def test_secrecy_must_be_below_qos(self):
        with pytest.raises(ConfigError):
            desk_config().replace(secrecy_tolerance_bps=2e6)

    def test_pmf_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            desk_config().replace(backhaul_pmf=((0.0, 0.5), (3e6, 0.6)))

    def test_counts_positive(self):
        with pytest.raises(ConfigError):
            desk_config().replace(num_bs=0)

    def test_yaml_round_trip(self, tmp_path):
        import yaml

        cfg = table1_config()
        path = tmp_path / "cfg.yaml"
        raw = {
            "num_bs": 7, "num_users": 5, "num_files": 10,
            "tx_antennas": 4, "er_antennas": 2,
            "max_tx_power_dbm": 46.0,
            "noise_density_dbm_per_hz": -172.6,
            "cache_capacity_bits": 2000e6 * 8,
            "backhaul_pmf": [[0.0, 0.3], [3e6, 0.4], [6e6, 0.3]],
        }
        path.write_text(yaml.safe_dump(raw))
        loaded = model.load_config(str(path))
        assert loaded == cfg

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("nonsense_key: 3\n")
        with pytest.raises(ConfigError, match="nonsense_key"):
            model.load_config(str(path))

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="no/such/file"):
            model.load_config("no/such/file.yaml")


class TestLayout:
    def test_seven_cell_cluster(self):
        pos = model.bs_layout(7, 500.0)
        assert pos.shape == (7, 2)
        np.testing.assert_allclose(pos[0], [0, 0])
        d = np.linalg.norm(pos[1:], axis=1)
        np.testing.assert_allclose(d, 500.0)

    def test_second_ring(self):
        pos = model.bs_layout(19, 500.0)
        d = np.sort(np.linalg.norm(pos, axis=1))
        np.testing.assert_allclose(d[:1], 0.0)
        np.testing.assert_allclose(d[1:7], 500.0)
        np.testing.assert_allclose(np.sort(d[7:]), np.sort([1000.0] * 6 + [500 * math.sqrt(3)] * 6),
                                   rtol=1e-12)


class TestScenario:
    def test_deterministic_given_seed(self):
        cfg = desk_config()
        pop = zipf_popularity(cfg.num_files, cfg.zipf_exponent)
        s1 = generate_scenario(cfg, pop, 42)
        s2 = generate_scenario(cfg, pop, 42)
        assert s1.requests == s2.requests
        np.testing.assert_array_equal(s1.channels_lr, s2.channels_lr)
        np.testing.assert_array_equal(s1.channel_er, s2.channel_er)
        np.testing.assert_array_equal(s1.backhaul_bps, s2.backhaul_bps)

    def test_shapes_and_min_distance(self):
        cfg = table1_config()
        pop = zipf_popularity(cfg.num_files, cfg.zipf_exponent)
        s = generate_scenario(cfg, pop, 0)
        n = cfg.num_bs * cfg.tx_antennas
        assert s.channels_lr.shape == (n, cfg.num_users)
        assert s.channel_er.shape == (n, cfg.er_antennas)
        for p in s.user_positions_m:
            assert np.min(np.linalg.norm(s.bs_positions_m - p, axis=1)) >= cfg.min_rx_distance_m

    def test_request_histogram_matches_zipf(self):
        pop = zipf_popularity(10, 1.1)
        rng = np.random.default_rng(7)
        reqs = model.draw_requests(rng, pop, 100_000)
        counts = np.bincount([r.file for r in reqs], minlength=10) / 100_000
        assert np.max(np.abs(counts - pop.theta)) < 0.01

    def test_backhaul_histogram_matches_pmf(self):
        cfg = desk_config()
        rng = np.random.default_rng(11)
        draws = np.concatenate([model.draw_backhaul(rng, cfg) for _ in range(40_000)])
        for cap, prob in cfg.backhaul_pmf:
            frac = np.mean(draws == cap)
            assert abs(frac - prob) < 0.01

    def test_fading_norm_concentration(self):
        # E||g||^2 = M*Nt for unit path gain
        cfg = desk_config()
        n = cfg.num_bs * cfg.tx_antennas
        acc = 0.0
        trials = 10_000
        for seed in range(trials):
            g = model.rayleigh_fading(np.random.default_rng(seed), n)
            acc += np.vdot(g, g).real
        assert abs(acc / trials - n) / n < 0.02

    def test_duplicate_users_rejected(self):
        cfg = desk_config()
        pop = zipf_popularity(cfg.num_files, cfg.zipf_exponent)
        s = generate_scenario(cfg, pop, 1)
        reqs = (model.Request(0, 0), model.Request(0, 1))
        with pytest.raises(ConfigError):
            model.Scenario(
                config=cfg, requests=reqs,
                channels_lr=np.array(s.channels_lr[:, :2]),
                channel_er=np.array(s.channel_er),
                backhaul_bps=np.array(s.backhaul_bps),
                noise_lr_w=s.noise_lr_w, noise_er_w=s.noise_er_w,
                bs_positions_m=np.array(s.bs_positions_m),
                user_positions_m=np.array(s.user_positions_m),
                er_position_m=np.array(s.er_position_m),
            )
