"""Signal-level particle-filter tracking for MIMO-OFDM ISAC stations."""

from .core import C, ConfigError, RadarConfig, Scheme, Station, TargetTruth, derive
from .filters import FilterSettings, ParticleCloud
from .fusion import FusionSettings
from .harness import Scenario, build_scenario, run_multipoint, run_tracking

__all__ = [
    "C",
    "ConfigError",
    "FilterSettings",
    "FusionSettings",
    "ParticleCloud",
    "RadarConfig",
    "Scenario",
    "Scheme",
    "Station",
    "TargetTruth",
    "build_scenario",
    "derive",
    "run_multipoint",
    "run_tracking",
]
