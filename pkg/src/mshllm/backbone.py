"""Frozen sequence backbones: seeded toy transformer, single attention layer, identity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Parameter, ShapeError, Tensor, attention, ensure_tensor, layer_norm, matmul

VARIANTS = ("frozen_transformer", "attention_only", "identity")


@dataclass(frozen=True)
class BackboneConfig:
    variant: str = "frozen_transformer"
    layers: int = 2
    heads: int = 1
    width: int = 2
    ffn_mult: int = 4
    seed: int = 7

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown backbone variant {self.variant!r}; expected one of {VARIANTS}")
        if self.heads < 1 or self.width % self.heads:
            raise ValueError(f"backbone width {self.width} not divisible by {self.heads} heads")
        if self.layers < 1:
            raise ValueError("backbone needs at least one layer")


class Backbone:
    """Weights are drawn once from ``cfg.seed`` and are never trainable."""

    def __init__(self, cfg: BackboneConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        D = cfg.width
        n_blocks = {"frozen_transformer": cfg.layers, "attention_only": 1, "identity": 0}[cfg.variant]
        self.params: dict[str, Parameter] = {}

        def frozen(name, shape, fan_in):
            self.params[name] = Parameter(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=shape), trainable=False, name=name)

        for b in range(n_blocks):
            for w in ("wq", "wk", "wv"):
                frozen(f"backbone{b}.{w}", (cfg.heads, D, D // cfg.heads), D)
            frozen(f"backbone{b}.wo", (D, D), D)
            if cfg.variant == "frozen_transformer":
                frozen(f"backbone{b}.ff1", (D, cfg.ffn_mult * D), D)
                frozen(f"backbone{b}.ff2", (cfg.ffn_mult * D, D), cfg.ffn_mult * D)
        self.n_blocks = n_blocks

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def _self_attention(self, x: Tensor, b: int) -> Tensor:
        lead, L, D = x.shape[:-2], x.shape[-2], x.shape[-1]
        xh = x.reshape(*lead, 1, L, D)
        q = matmul(xh, self.params[f"backbone{b}.wq"])
        k = matmul(xh, self.params[f"backbone{b}.wk"])
        v = matmul(xh, self.params[f"backbone{b}.wv"])
        heads = attention(q, k, v)  # (..., J, L, d), bidirectional
        n = len(lead)
        merged = heads.transpose(tuple(range(n)) + (n + 1, n, n + 2)).reshape(*lead, L, D)
        return matmul(merged, self.params[f"backbone{b}.wo"])

    def __call__(self, seq) -> Tensor:
        seq = ensure_tensor(seq)
        if seq.shape[-1] != self.cfg.width:
            raise ShapeError(f"backbone width {self.cfg.width} but sequence width {seq.shape[-1]}")
        x = seq
        for b in range(self.n_blocks):
            if self.cfg.variant == "attention_only":
                x = x + self._self_attention(x, b)
                continue
            x = x + self._self_attention(layer_norm(x), b)
            h = matmul(layer_norm(x), self.params[f"backbone{b}.ff1"]).relu()
            x = x + matmul(h, self.params[f"backbone{b}.ff2"])
        return x


def backbone_forward(seq, cfg: BackboneConfig) -> Tensor:
    return Backbone(cfg)(seq)
