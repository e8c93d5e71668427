"""Maritime UAV ISAC network simulator and two-stage SCA optimizer."""

from .scenario import (ConfigError, NodeLayout, ScenarioConfig, dbm_to_watts,
                       load_config, make_layout, place_nodes)

__all__ = [
    "ConfigError",
    "NodeLayout",
    "ScenarioConfig",
    "dbm_to_watts",
    "load_config",
    "make_layout",
    "place_nodes",
]

__version__ = "0.1.0"
