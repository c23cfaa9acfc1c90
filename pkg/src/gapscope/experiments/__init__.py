from .config import ConfigError, ExperimentConfig, load_config
from .presets import PRESET_NAMES, preset
from .runner import RunResult, run_config

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "PRESET_NAMES", "preset", "RunResult", "run_config"]
