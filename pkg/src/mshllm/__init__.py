"""Multi-scale hypergraph forecaster with prototype alignment, mixed prompts and a frozen toy backbone."""
from __future__ import annotations

from .config import ConfigError, RunConfig, load_config
from .data import SynthSpec, TimeSeriesDataset, generate_synthetic, load_csv
from .estimator import MSHForecaster, RevIN
from .model import MSHLLM, ModelConfig
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "MSHForecaster",
    "MSHLLM",
    "ModelConfig",
    "RevIN",
    "RunConfig",
    "SynthSpec",
    "TimeSeriesDataset",
    "TrainConfig",
    "generate_synthetic",
    "load_config",
    "load_csv",
    "train",
]
