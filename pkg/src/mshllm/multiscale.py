"""Multi-scale extraction: the temporal feature pyramid and per-scale text prototypes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Parameter, Tensor, aggregate_1d, ensure_tensor, matmul


@dataclass(frozen=True)
class ScaleConfig:
    """``windows[s]`` aggregates level ``s`` into level ``s + 1``; ``len(windows) == S - 1``."""

    S: int = 3
    windows: tuple[int, ...] = (4, 4)
    mode: str = "conv"

    def __post_init__(self):
        if self.S < 1:
            raise ValueError(f"S must be >= 1, got {self.S}")
        if len(self.windows) != self.S - 1:
            raise ValueError(f"need S-1 = {self.S - 1} aggregation windows, got {len(self.windows)}")
        if any(w < 2 for w in self.windows):
            raise ValueError(f"aggregation windows must be >= 2, got {self.windows}")
        if self.mode not in ("conv", "avgpool"):
            raise ValueError(f"unknown aggregation mode {self.mode!r}")

    def lengths(self, n: int) -> list[int]:
        out = [n]
        for w in self.windows:
            out.append(out[-1] // w)
        return out


def init_pyramid_params(cfg: ScaleConfig, D: int, rng: np.random.Generator) -> dict[str, Parameter]:
    params: dict[str, Parameter] = {}
    if cfg.mode != "conv":
        return params
    for s, w in enumerate(cfg.windows, start=1):
        bound = 1.0 / np.sqrt(w)
        params[f"agg{s}.kernel"] = Parameter(rng.uniform(-bound, bound, size=(w, D)), name=f"agg{s}.kernel")
        params[f"agg{s}.bias"] = Parameter(rng.uniform(-bound, bound, size=(D,)), name=f"agg{s}.bias")
    return params


def build_pyramid(x_norm, cfg: ScaleConfig, params: dict[str, Parameter] | None = None) -> list[Tensor]:
    """Levels ``X^1 .. X^S``; level 1 is the (normalised) input itself."""
    x = ensure_tensor(x_norm)
    lengths = cfg.lengths(x.shape[-2])
    empty = [s + 1 for s, n in enumerate(lengths) if n == 0]
    if empty:
        raise ValueError(f"input length {x.shape[-2]} leaves scales {empty} empty with windows {cfg.windows}")
    levels = [x]
    for s, w in enumerate(cfg.windows, start=1):
        agg_params = None
        if cfg.mode == "conv":
            agg_params = (params[f"agg{s}.kernel"], params[f"agg{s}.bias"])
        levels.append(aggregate_1d(levels[-1], w, cfg.mode, agg_params))
    return levels


def avgpool_pyramid(x: np.ndarray, windows) -> list[np.ndarray]:
    """Parameter-free pyramid on plain arrays (used for prompt statistics)."""
    levels = [np.asarray(x, dtype=np.float64)]
    for w in windows:
        prev = levels[-1]
        n = prev.shape[-2] // w
        if n == 0:
            break
        levels.append(prev[..., : n * w, :].reshape(*prev.shape[:-2], n, w, prev.shape[-1]).mean(axis=-2))
    return levels


@dataclass(frozen=True)
class PrototypeConfig:
    vocab_size: int = 1000
    width: int = 32
    counts: tuple[int, ...] = (100, 50, 10)
    seed: int = 1234
    source: str = "llm"

    def __post_init__(self):
        if any(c < 1 for c in self.counts):
            raise ValueError(f"prototype counts must be positive, got {self.counts}")
        if any(b >= a for a, b in zip(self.counts, self.counts[1:])):
            raise ValueError(f"prototype counts must strictly decrease across scales, got {self.counts}")
        if self.source == "llm" and self.counts[0] * 4 > self.vocab_size:
            raise ValueError(
                f"first-scale prototype count {self.counts[0]} must be at most vocab_size/4 = {self.vocab_size / 4:g}"
            )
        if self.source not in ("llm", "manual", "random"):
            raise ValueError(f"unknown prototype source {self.source!r}")


# word lists for the manually-selected and randomly-selected prototype sources
MANUAL_WORDS = (
    "small big rapid increase steady decrease rise fall peak trough high low stable volatile "
    "upward downward trend cycle season periodic sharp gradual spike dip flat smooth noisy "
    "growth decline surge drop level shift repeat daily weekly long short strong weak"
).split()
RANDOM_WORDS = (
    "increase happy can white noise table river blue seven orange walk paper quiet strong "
    "garden coffee north window letter music circle stone yellow between window bright cloud "
    "forest engine silver honest basket little moment travel pocket wonder simple"
).split()


def base_vocab_table(cfg: PrototypeConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    return rng.normal(0.0, 1.0, size=(cfg.vocab_size, cfg.width))


def selected_vocab_rows(cfg: PrototypeConfig) -> np.ndarray | None:
    """Row indices for the word-list sources, ``None`` for the full table."""
    if cfg.source == "llm":
        return None
    from .prompts import hash_token

    words = MANUAL_WORDS if cfg.source == "manual" else RANDOM_WORDS
    return np.array([hash_token(w, cfg.vocab_size) for w in words])


def init_prototype_params(cfg: PrototypeConfig, rng: np.random.Generator) -> dict[str, Parameter]:
    base = base_vocab_table(cfg)
    rows = selected_vocab_rows(cfg)
    params = {"proto.base_vocab": Parameter(base, trainable=False, name="proto.base_vocab")}
    n_in = cfg.vocab_size if rows is None else len(rows)
    params["proto.reducer"] = Parameter(
        rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(cfg.counts[0], n_in)), name="proto.reducer"
    )
    for s in range(1, len(cfg.counts)):
        a, b = cfg.counts[s - 1], cfg.counts[s]
        params[f"proto.lambda{s}"] = Parameter(rng.normal(0.0, 1.0 / np.sqrt(a), size=(b, a)), name=f"proto.lambda{s}")
    return params


def build_prototypes(cfg: PrototypeConfig, params: dict[str, Parameter]) -> list[Tensor]:
    """``U^1 = reducer @ vocab``, ``U^s = lambda^{s-1} @ U^{s-1}``; every level has width P."""
    base = params["proto.base_vocab"]
    rows = selected_vocab_rows(cfg)
    if rows is not None:
        base = Tensor(base.data[rows])
    levels = [matmul(params["proto.reducer"], base)]
    for s in range(1, len(cfg.counts)):
        levels.append(matmul(params[f"proto.lambda{s}"], levels[-1]))
    return levels
