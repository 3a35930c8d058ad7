import numpy as np
import pytest

from cachebeam import model
from cachebeam.model import Request, Scenario, SystemConfig


def synthetic_scenario(channels_lr: np.ndarray, channel_er: np.ndarray,
                       config: SystemConfig, files: list[int] | None = None,
                       noise_w: float = 1.0,
                       backhaul_bps: np.ndarray | None = None) -> Scenario:
    """Scenario with hand-picked channels, for algebraic oracles."""
    n, s = channels_lr.shape
    assert n == config.num_bs * config.tx_antennas
    files = files if files is not None else list(range(s))
    if backhaul_bps is None:
        backhaul_bps = np.full(config.num_bs, 1e12)
    layout = model.bs_layout(config.num_bs, config.inter_bs_distance_m)
    return Scenario(
        config=config,
        requests=tuple(Request(user=k, file=files[k]) for k in range(s)),
        channels_lr=np.asarray(channels_lr, dtype=complex),
        channel_er=np.asarray(channel_er, dtype=complex),
        backhaul_bps=np.asarray(backhaul_bps, dtype=float),
        noise_lr_w=noise_w,
        noise_er_w=noise_w,
        bs_positions_m=layout,
        user_positions_m=np.zeros((config.num_users, 2)),
        er_position_m=np.zeros(2),
    )


def random_complex(rng: np.random.Generator, *shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@pytest.fixture
def desk_cfg():
    return model.desk_config()


@pytest.fixture
def desk_pop(desk_cfg):
    return model.zipf_popularity(desk_cfg.num_files, desk_cfg.zipf_exponent)
