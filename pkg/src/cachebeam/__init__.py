"""Cache-enabled secure cooperative beamforming simulator."""

from cachebeam.model import (
    CacheState,
    ConfigError,
    PopularityProfile,
    Request,
    Scenario,
    SystemConfig,
    backhaul_load_rate,
    dbm_to_watts,
    desk_config,
    generate_scenario,
    load_config,
    noise_power,
    path_loss_db,
    rate_to_sinr_threshold,
    table1_config,
    watts_to_dbm,
    zipf_popularity,
)

__version__ = "0.1.0"
