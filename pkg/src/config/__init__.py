from src.config.manager import ConfigManager
from src.config.schema import (
    TRAIN_PRESETS,
    RunConfig,
    apply_overrides,
    config_from_dict,
    load_run_config,
    preset_config,
)

__all__ = [
    "ConfigManager",
    "TRAIN_PRESETS",
    "RunConfig",
    "apply_overrides",
    "config_from_dict",
    "load_run_config",
    "preset_config",
]
