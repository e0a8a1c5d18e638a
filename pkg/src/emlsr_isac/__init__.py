"""Time-based ISAC tracking and scheduling over an EMLSR multi-link AP."""

from .config import (ConfigError, CvOffdiag, Mode, NetworkConfig, Scheme, TimingConfig,
                     load_config, validate_config)
from .sim import RunMetrics, run

__all__ = [
    "ConfigError",
    "CvOffdiag",
    "Mode",
    "NetworkConfig",
    "RunMetrics",
    "Scheme",
    "TimingConfig",
    "load_config",
    "run",
    "validate_config",
]

__version__ = "0.1.0"
