"""UAV-to-UAV live video streaming simulator with learning agents."""
from .config import ConfigError, ExperimentConfig, load_config, toy_config
from .env import JointAction, StepOutcome, U2UEnv

__all__ = ["ConfigError", "ExperimentConfig", "JointAction", "StepOutcome", "U2UEnv", "load_config", "toy_config"]
__version__ = "0.1.0"
