from __future__ import annotations

import numpy as np
import pytest

from mshllm.backbone import BackboneConfig
from mshllm.config import DataSource, RunConfig
from mshllm.data import SynthSpec
from mshllm.hyperedging import HyperedgeConfig
from mshllm.model import ModelConfig
from mshllm.multiscale import PrototypeConfig, ScaleConfig
from mshllm.training import TrainConfig


def tiny_model_config(**changes) -> ModelConfig:
    cfg = ModelConfig(
        input_length=32,
        horizon=8,
        channels=2,
        scales=ScaleConfig(S=2, windows=(4,)),
        hyperedges=HyperedgeConfig(counts=(6, 3), eta=2),
        prototypes=PrototypeConfig(vocab_size=200, width=8, counts=(20, 10)),
        heads=2,
        prompt_lengths=(2, 2),
        backbone=BackboneConfig(width=2),
    )
    return cfg.with_(**changes)


def tiny_run_config(**changes) -> RunConfig:
    synth = SynthSpec(length=400, channels=2, components=((12.0, 1.0), (48.0, 0.5)), noise_std=0.05, seed=3, name="toy")
    cfg = RunConfig(
        data=DataSource(synth=synth, frequency="hourly"),
        stride=8,
        eval_stride=8,
        model=tiny_model_config(),
        train=TrainConfig(epochs=2, batch_size=8),
        metrics=("mse", "mae", "smape", "mase"),
    )
    from dataclasses import replace

    return replace(cfg, **changes)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    lines = [test_acceptance.RESULTS[k] for k in sorted(test_acceptance.RESULTS)]
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
