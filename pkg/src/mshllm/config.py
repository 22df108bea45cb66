"""Run configuration: a versioned JSON document covering data, model, training and protocol."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import SynthSpec
from .model import ModelConfig
from .training import BATCH_SIZES, LEARNING_RATES, TrainConfig

CONFIG_VERSION = 1
PROTOCOLS = ("standard", "fewshot_5", "fewshot_10")
FEWSHOT_FRACTIONS = {"standard": 1.0, "fewshot_5": 0.05, "fewshot_10": 0.10}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSource:
    """Either a CSV path (with frequency) or a synthetic spec."""

    csv: str | None = None
    frequency: str = "other"
    name: str | None = None
    synth: SynthSpec | None = None

    def __post_init__(self):
        if (self.csv is None) == (self.synth is None):
            raise ConfigError("data source needs exactly one of 'csv' or 'synth'")

    def to_dict(self) -> dict:
        d = {"frequency": self.frequency}
        if self.csv is not None:
            d["csv"] = self.csv
        if self.name is not None:
            d["name"] = self.name
        if self.synth is not None:
            d["synth"] = self.synth.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DataSource":
        synth = SynthSpec.from_dict(d["synth"]) if d.get("synth") is not None else None
        return cls(d.get("csv"), d.get("frequency", synth.frequency if synth else "other"), d.get("name"), synth)


@dataclass(frozen=True)
class RunConfig:
    data: DataSource = field(default_factory=lambda: DataSource(synth=SynthSpec()))
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    stride: int = 1
    eval_stride: int = 1
    val_stride: int | None = None
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    protocol: str = "standard"
    metrics: tuple[str, ...] = ("mse", "mae")
    mask_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; expected one of {PROTOCOLS}")
        if self.stride < 1 or self.eval_stride < 1 or (self.val_stride is not None and self.val_stride < 1):
            raise ConfigError("window strides must be positive")
        unknown = set(self.metrics) - {"mse", "mae", "smape", "mase", "owa"}
        if unknown:
            raise ConfigError(f"unknown metrics {sorted(unknown)}")

    def to_dict(self) -> dict:
        return {
            "version": CONFIG_VERSION,
            "data": self.data.to_dict(),
            "split": list(self.split),
            "stride": self.stride,
            "eval_stride": self.eval_stride,
            "val_stride": self.val_stride,
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "protocol": self.protocol,
            "metrics": list(self.metrics),
            "mask_rate": self.mask_rate,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        version = d.get("version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {version}")
        try:
            return cls(
                data=DataSource.from_dict(d.get("data", {"synth": {}})),
                split=tuple(d.get("split", (0.6, 0.2, 0.2))),
                stride=int(d.get("stride", 1)),
                eval_stride=int(d.get("eval_stride", 1)),
                val_stride=None if d.get("val_stride") is None else int(d["val_stride"]),
                model=ModelConfig.from_dict(d.get("model", {})),
                train=TrainConfig(**d.get("train", {})),
                protocol=d.get("protocol", "standard"),
                metrics=tuple(d.get("metrics", ("mse", "mae"))),
                mask_rate=float(d.get("mask_rate", 0.0)),
                seed=int(d.get("seed", 0)),
            )
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(
            self,
            seed=seed,
            model=replace(self.model, seed=seed),
            train=replace(self.train, seed=seed),
        )


def load_config(path) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(d)


# hyperparameter grid (values taken from the published search space)
GRID = {
    "lr": LEARNING_RATES,
    "batch_size": BATCH_SIZES,
    "hyperedges1": (5, 10, 20, 30, 50),
    "hyperedges2": (2, 5, 10, 15, 20),
    "hyperedges3": (1, 2, 4, 5, 8, 12),
    "prototypes1": (20, 50, 100, 200, 500, 1000),
    "prototypes2": (10, 25, 50, 100, 200, 500),
    "prototypes3": (4, 5, 10, 25, 50, 100),
    "window1": (2, 4, 8),
    "window2": (2, 4),
    "eta": (2, 3, 4, 5, 10, 15, 20),
}


def grid_configs(base: RunConfig, budget: int, seed: int = 0) -> list[RunConfig]:
    """Up to ``budget`` valid three-scale configs drawn deterministically from the grid."""
    keys = list(GRID)
    sizes = [len(GRID[k]) for k in keys]
    total = int(np.prod(sizes))
    rng = np.random.default_rng(seed)
    out: list[RunConfig] = []
    seen: set[int] = set()
    for _ in range(50 * budget):
        if len(out) >= budget:
            break
        flat = int(rng.integers(total))
        if flat in seen:
            continue
        seen.add(flat)
        idx = np.unravel_index(int(flat), sizes)
        pick = {k: GRID[k][i] for k, i in zip(keys, idx)}
        try:
            m = base.model
            model = replace(
                m,
                scales=replace(m.scales, S=3, windows=(pick["window1"], pick["window2"])),
                hyperedges=replace(
                    m.hyperedges,
                    counts=(pick["hyperedges1"], pick["hyperedges2"], pick["hyperedges3"]),
                    eta=pick["eta"],
                ),
                prototypes=replace(
                    m.prototypes, counts=(pick["prototypes1"], pick["prototypes2"], pick["prototypes3"])
                ),
                prompt_lengths=tuple(m.prompt_lengths[:1]) * 3,
            )
            train = replace(base.train, lr=pick["lr"], batch_size=pick["batch_size"])
            out.append(replace(base, model=model, train=train))
        except ValueError:
            continue
    return out

