"""Optimisation loop, Adam, gradient clipping, logs and checkpoints."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .model import MSHLLM, ModelConfig, loss_mse
from .numerics import Parameter, zero_grad

log = logging.getLogger(__name__)

LEARNING_RATES = (1e-3, 5e-3, 1e-4)
BATCH_SIZES = (8, 16, 32, 64, 128, 256)
LOSSES = ("mse", "mse_plus_aso", "aso_two_stage")
CHECKPOINT_VERSION = 1


class NumericalError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    loss: str = "mse"
    aso_gamma: float = 1.0
    aso_weight: float = 0.1
    aso_epochs: int = 2
    clip_norm: float | None = 1.0
    strict_lr: bool = True

    def __post_init__(self):
        if self.strict_lr and self.lr not in LEARNING_RATES:
            raise ValueError(f"lr must be one of {LEARNING_RATES}, got {self.lr}")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.aso_gamma <= 0:
            raise ValueError("aso_gamma must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params: list[Parameter], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = [p for p in params if p.trainable]
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        c1, c2 = 1.0 - b1**self.t, 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        zero_grad(self.params)


def clip_grad_norm(params: list[Parameter], max_norm: float) -> float:
    total = float(np.sqrt(sum(float((p.grad * p.grad).sum()) for p in params)))
    if total > max_norm:
        scale = max_norm / total
        for p in params:
            p.grad = p.grad * scale
    return total


@dataclass
class SplitData:
    """Stacked windows of one split with their pre-rendered data-prompt embeddings."""

    x: np.ndarray
    y: np.ndarray
    data_emb: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.x)

    @classmethod
    def build(cls, model: MSHLLM, x: np.ndarray, y: np.ndarray) -> "SplitData":
        return cls(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64), model.data_prompt_batch(x))

    def batch(self, idx) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        emb = None if self.data_emb is None else self.data_emb[idx]
        return self.x[idx], self.y[idx], emb


@dataclass
class TrainResult:
    steps: list[dict]
    epochs: list[dict]
    best_epoch: int
    best_val_mse: float
    frozen_hash_before: str
    frozen_hash_after: str

    def log_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "epoch", "stage", "loss", "lr"])
        for r in self.steps:
            w.writerow([r["step"], r["epoch"], r["stage"], repr(r["loss"]), repr(r["lr"])])
        return buf.getvalue()


def _check_finite(loss_value: float, params: list[Parameter]) -> None:
    if not np.isfinite(loss_value):
        raise NumericalError(f"non-finite loss {loss_value}")
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NumericalError(f"non-finite gradient in parameter {p.name!r}")
        if not np.all(np.isfinite(p.data)):
            raise NumericalError(f"non-finite values in parameter {p.name!r}")


def evaluate_mse(model: MSHLLM, split: SplitData, batch_size: int = 256) -> tuple[float, float]:
    """Mean squared and mean absolute error over all windows, horizon steps and channels."""
    se = ae = 0.0
    n = 0
    for i in range(0, len(split), batch_size):
        x, y, emb = split.batch(slice(i, i + batch_size))
        pred = model.forward(x, emb).forecast.data
        se += float(((pred - y) ** 2).sum())
        ae += float(np.abs(pred - y).sum())
        n += y.size
    return se / n, ae / n


def _batch_loss(model: MSHLLM, x, y, emb, stage: str, cfg: TrainConfig):
    res = model.forward(x, emb)
    if stage == "aso":
        return model.aso_loss(res.hyper_features, res.prototypes, cfg.aso_gamma)
    loss = loss_mse(res.forecast, y)
    if cfg.loss == "mse_plus_aso":
        loss = loss + model.aso_loss(res.hyper_features, res.prototypes, cfg.aso_gamma) * cfg.aso_weight
    return loss


def train(
    model: MSHLLM,
    train_split: SplitData,
    cfg: TrainConfig,
    val_split: SplitData | None = None,
    on_epoch_end: Callable[[int, MSHLLM], None] | None = None,
) -> TrainResult:
    """Adam on shuffled mini-batches; keeps the parameters with the best validation MSE."""
    params = model.trainable_parameters()
    opt = Adam(params, cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    frozen_before = model.frozen_hash()
    stages = ["forecast"] * cfg.epochs
    if cfg.loss == "aso_two_stage":
        stages = ["aso"] * cfg.aso_epochs + stages
    steps: list[dict] = []
    epochs: list[dict] = []
    best = (float("inf"), -1, None)
    step = 0
    for epoch, stage in enumerate(stages):
        order = rng.permutation(len(train_split))
        losses = []
        for i in range(0, len(order), cfg.batch_size):
            idx = np.sort(order[i : i + cfg.batch_size])
            x, y, emb = train_split.batch(idx)
            opt.zero_grad()
            loss = _batch_loss(model, x, y, emb, stage, cfg)
            value = float(loss.data)
            loss.backward()
            _check_finite(value, params)
            if cfg.clip_norm is not None:
                clip_grad_norm(params, cfg.clip_norm)
            opt.step()
            steps.append({"step": step, "epoch": epoch, "stage": stage, "loss": value, "lr": cfg.lr})
            losses.append(value)
            step += 1
        row = {"epoch": epoch, "stage": stage, "train_loss": float(np.mean(losses))}
        if val_split is not None and len(val_split) and stage == "forecast":
            row["val_mse"], row["val_mae"] = evaluate_mse(model, val_split)
            if row["val_mse"] < best[0]:
                best = (row["val_mse"], epoch, model.state_dict())
        epochs.append(row)
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)
        log.info("epoch %d (%s): %s", epoch, stage, row)
    if best[2] is not None:
        model.load_state_dict(best[2])
    frozen_after = model.frozen_hash()
    if frozen_after != frozen_before:
        raise RuntimeError("frozen parameters changed during training")
    return TrainResult(steps, epochs, best[1], best[0], frozen_before, frozen_after)


def save_checkpoint(model: MSHLLM, path, extra: dict | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "config_hash": model.cfg.config_hash(),
        "frozen_hash": model.frozen_hash(),
        **(extra or {}),
    }
    arrays = {f"param/{k}": v for k, v in model.state_dict().items()}
    with Path(path).open("wb") as fh:
        np.savez(fh, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path, expected_hash: str | None = None) -> tuple[MSHLLM, dict]:
    with np.load(Path(path)) as z:
        meta = json.loads(z["__meta__"].tobytes().decode())
        state = {k[len("param/") :]: z[k] for k in z.files if k.startswith("param/")}
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
    if expected_hash is not None and meta["config_hash"] != expected_hash:
        raise ValueError(f"checkpoint config hash {meta['config_hash']} != expected {expected_hash}")
    model = MSHLLM(ModelConfig.from_dict(meta["config"]))
    model.load_state_dict(state)
    if model.frozen_hash() != meta["frozen_hash"]:
        raise ValueError("frozen backbone/vocabulary in checkpoint does not match this build")
    return model, meta
