"""End-to-end forecaster: multi-scale extraction, hyperedging, alignment, prompt
assembly, frozen backbone, output projection and losses."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import prompts as mop
from .alignment import align_scale, head_width, init_cma_params, prototype_value_projection
from .backbone import Backbone, BackboneConfig
from .data import RevinState, revin_denormalize, revin_normalize
from .hyperedging import (
    HyperedgeConfig,
    hyperedge_features,
    init_hyperedge_params,
    patch_features,
    scale_incidence,
)
from .multiscale import PrototypeConfig, ScaleConfig, build_prototypes, build_pyramid, init_prototype_params, init_pyramid_params
from .numerics import Parameter, ShapeError, Tensor, broadcast_to, concat, ensure_tensor, matmul, norm, parameter_hash

HYPER_MODES = ("hyperedge", "none", "patch")


@dataclass(frozen=True)
class ModelConfig:
    input_length: int = 256
    horizon: int = 48
    channels: int = 2
    scales: ScaleConfig = field(default_factory=ScaleConfig)
    hyperedges: HyperedgeConfig = field(default_factory=HyperedgeConfig)
    prototypes: PrototypeConfig = field(default_factory=PrototypeConfig)
    heads: int = 2
    merge: str = "concat"
    prompt_lengths: tuple[int, ...] = (4, 4, 4)
    use_learnable_prompts: bool = True
    use_data_prompt: bool = True
    use_capability_prompt: bool = True
    hyper_mode: str = "hyperedge"
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    task: str = "long_forecast"
    token_vocab: int = mop.DEFAULT_VOCAB
    token_seed: int = 4321
    dataset_name: str = "dataset"
    frequency: str = "other"
    description: str | None = None
    projection_init: str = "zeros"
    positional: bool = True
    seed: int = 0

    def __post_init__(self):
        S = self.scales.S
        if len(self.hyperedges.counts) != S:
            raise ValueError(f"{len(self.hyperedges.counts)} hyperedge counts for {S} scales")
        if len(self.prototypes.counts) != S:
            raise ValueError(f"{len(self.prototypes.counts)} prototype counts for {S} scales")
        if len(self.prompt_lengths) != S:
            raise ValueError(f"{len(self.prompt_lengths)} prompt lengths for {S} scales")
        if self.backbone.width != self.channels:
            raise ValueError(f"backbone width {self.backbone.width} != channel count {self.channels}")
        if self.hyper_mode not in HYPER_MODES:
            raise ValueError(f"unknown hyper_mode {self.hyper_mode!r}")
        if self.merge not in ("concat", "sum"):
            raise ValueError(f"unknown head merge {self.merge!r}")
        if self.task not in mop.TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        head_width(self.channels, self.heads)
        lengths = self.scales.lengths(self.input_length)
        if min(lengths) < 1:
            raise ValueError(f"input length {self.input_length} too short for windows {self.scales.windows}")
        for s, (n, m) in enumerate(zip(lengths, self.hyperedges.counts), start=1):
            if self.hyperedges.eta > m:
                raise ValueError(f"eta={self.hyperedges.eta} exceeds {m} hyperedges at scale {s}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["scales"] = ScaleConfig(**_tuplify(d.get("scales", {})))
        d["hyperedges"] = HyperedgeConfig(**_tuplify(d.get("hyperedges", {})))
        d["prototypes"] = PrototypeConfig(**_tuplify(d.get("prototypes", {})))
        d["backbone"] = BackboneConfig(**d.get("backbone", {}))
        return cls(**_tuplify(d))

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def with_(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


def _tuplify(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


@dataclass
class AssembledSequence:
    sequence: Tensor
    boundaries: dict[str, tuple[int, int]]

    @property
    def length(self) -> int:
        return self.sequence.shape[-2]


@dataclass
class ForwardResult:
    forecast: Tensor
    normalized_forecast: Tensor
    revin: RevinState
    assembled: AssembledSequence
    hyper_features: list[Tensor]
    prototypes: list[Tensor]
    backbone_out: Tensor


def assemble(parts: list[tuple[str, Tensor]], batch: int | None = None) -> AssembledSequence:
    """Concatenate named blocks along the sequence axis, broadcasting shared blocks to the batch."""
    parts = [(n, ensure_tensor(t)) for n, t in parts if t is not None and t.shape[-2] > 0]
    if not parts:
        raise ShapeError("nothing to assemble")
    widths = {t.shape[-1] for _, t in parts}
    if len(widths) != 1:
        raise ShapeError(f"assembled blocks have mismatched widths {sorted(widths)}")
    if batch is not None:
        parts = [(n, t if t.ndim == 3 else broadcast_to(t, (batch, *t.shape))) for n, t in parts]
    bounds, start = {}, 0
    for name, t in parts:
        bounds[name] = (start, start + t.shape[-2])
        start += t.shape[-2]
    return AssembledSequence(concat([t for _, t in parts], axis=-2), bounds)


def project_output(o: Tensor, w: Tensor, b: Tensor, revin: RevinState | None, H: int, D_out: int) -> Tensor:
    """Flatten backbone output, apply the linear head, reshape to ``(H, D_out)`` and denormalise."""
    o = ensure_tensor(o)
    lead = o.shape[:-2]
    flat = o.reshape(*lead, o.shape[-2] * o.shape[-1])
    if w.shape != (flat.shape[-1], H * D_out):
        raise ShapeError(f"projection weight {w.shape} does not map {flat.shape[-1]} -> {H}x{D_out}")
    y = (matmul(flat, w) + b).reshape(*lead, H, D_out)
    return y if revin is None else revin_denormalize(y, revin)


def loss_mse(pred, target) -> Tensor:
    pred, target = ensure_tensor(pred), ensure_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    return (diff * diff).mean()


def aso_terms(hyper, protos_proj):
    """Cosine similarities and Euclidean distances between hyperedge features and projected prototypes."""
    hyper, protos_proj = ensure_tensor(hyper), ensure_tensor(protos_proj)
    e = hyper.reshape(*hyper.shape[:-1], 1, hyper.shape[-1])  # (..., M, 1, D)
    diff = e - protos_proj  # (..., M, V, D)
    dist = norm(diff, axis=-1)
    dots = matmul(hyper, protos_proj.T)
    ne = norm(hyper, axis=-1, keepdims=True)
    nu = norm(protos_proj, axis=-1, keepdims=True).T
    denom = ne * nu
    safe = Tensor(np.where(denom.data > 0, 0.0, 1.0))
    tau = dots / (denom + safe)
    return tau, dist


def loss_aso(hyper, protos_proj, gamma: float) -> Tensor:
    """Cosine-weighted distance plus margin hinge, normalised by ``1 / M^2`` and averaged over batch."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    tau, dist = aso_terms(hyper, protos_proj)
    M = tau.shape[-2]
    hinge = (dist * -1.0 + gamma).relu()
    per = tau * dist + (1.0 - tau) * hinge
    total = per.sum(axis=(-2, -1)) * (1.0 / (M * M))
    return total.mean() if total.ndim else total


class MSHLLM:
    """Parameter container plus the forward pass over a batch of raw input windows."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        D = cfg.channels
        self.node_counts = cfg.scales.lengths(cfg.input_length)
        self.params: dict[str, Parameter] = {}
        self.params.update(init_pyramid_params(cfg.scales, D, rng))
        self.params.update(init_prototype_params(cfg.prototypes, rng))
        if cfg.hyper_mode == "hyperedge":
            self.params.update(init_hyperedge_params(cfg.hyperedges, self.node_counts, D, rng))
        self.params.update(init_cma_params(cfg.scales.S, D, cfg.prototypes.width, cfg.heads, rng, cfg.merge))
        if cfg.use_learnable_prompts:
            self.params.update(mop.init_learnable_prompts(cfg.prompt_lengths, D, rng))
        self.token_table = Parameter(mop.token_table(cfg.token_vocab, D, cfg.token_seed), trainable=False, name="token_table")
        self.capability = None
        if cfg.use_capability_prompt:
            self.capability = Tensor(mop.tokenize_embed(mop.build_capability_prompt(cfg.task), self.token_table.data).embedded)
        self.backbone = Backbone(cfg.backbone)
        self.meta = mop.DatasetMeta(cfg.dataset_name, cfg.frequency, D, cfg.description)
        self.data_prompt_length = 0
        if cfg.use_data_prompt:
            self.data_prompt_length = len(self.data_prompt_embedding(np.zeros((cfg.input_length, D))))
        self.block_lengths = self._block_lengths()
        self.total_length = sum(self.block_lengths.values())
        L = self.total_length
        if cfg.positional:
            self.params["position"] = Parameter(rng.normal(0.0, 0.02, size=(L, D)), name="position")
        fan_in, fan_out = L * D, cfg.horizon * D
        if cfg.projection_init == "zeros":
            w = np.zeros((fan_in, fan_out))
        else:
            bound = 1.0 / math.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        self.params["proj.w"] = Parameter(w, name="proj.w")
        self.params["proj.b"] = Parameter(np.zeros(fan_out), name="proj.b")

    # -- bookkeeping ------------------------------------------------------
    def hyperedge_counts(self) -> list[int]:
        cfg = self.cfg
        if cfg.hyper_mode == "hyperedge":
            return list(cfg.hyperedges.counts)
        if cfg.hyper_mode == "none":
            return list(self.node_counts)
        return [-(-n // self.patch_len(s)) for s, n in enumerate(self.node_counts, start=1)]

    def patch_len(self, s: int) -> int:
        n, m = self.node_counts[s - 1], self.cfg.hyperedges.counts[s - 1]
        return max(1, -(-n // m))

    def _block_lengths(self) -> dict[str, int]:
        cfg = self.cfg
        out = {"data_prompt": self.data_prompt_length}
        out["capability_prompt"] = 0 if self.capability is None else self.capability.shape[0]
        for s, m in enumerate(self.hyperedge_counts(), start=1):
            out[f"prompt{s}"] = cfg.prompt_lengths[s - 1] if cfg.use_learnable_prompts else 0
            out[f"aligned{s}"] = m
        return out

    def parameters(self) -> list[Parameter]:
        return list(self.params.values())

    def trainable_parameters(self) -> list[Parameter]:
        return [p for p in self.params.values() if p.trainable]

    def frozen_parameters(self) -> list[Parameter]:
        frozen = [p for p in self.params.values() if not p.trainable]
        return frozen + [self.token_table] + self.backbone.parameters()

    def frozen_hash(self) -> str:
        return parameter_hash(self.frozen_parameters())

    def state_hash(self) -> str:
        return parameter_hash(self.parameters() + [self.token_table] + self.backbone.parameters())

    # -- prompts ----------------------------------------------------------
    def data_prompt(self, window: np.ndarray) -> mop.TextPrompt:
        return mop.build_data_prompt(self.meta, window, self.cfg.scales.windows, self.cfg.horizon, self.cfg.task)

    def data_prompt_embedding(self, window: np.ndarray) -> np.ndarray:
        return mop.tokenize_embed(self.data_prompt(window), self.token_table.data).embedded

    def data_prompt_batch(self, x_raw: np.ndarray) -> np.ndarray | None:
        if not self.cfg.use_data_prompt:
            return None
        embs = [self.data_prompt_embedding(w) for w in np.asarray(x_raw)]
        lengths = {e.shape[0] for e in embs}
        if lengths != {self.data_prompt_length}:
            raise ShapeError(f"data prompt token counts {sorted(lengths)} differ from {self.data_prompt_length}")
        return np.stack(embs)

    # -- forward ----------------------------------------------------------
    def encode(self, x_norm) -> tuple[list[Tensor], list[Tensor], list[Tensor]]:
        """Hyperedge features, prototype levels and aligned features per scale."""
        cfg, p = self.cfg, self.params
        levels = build_pyramid(x_norm, cfg.scales, p)
        protos = build_prototypes(cfg.prototypes, p)
        feats = []
        for s, level in enumerate(levels, start=1):
            if cfg.hyper_mode == "hyperedge":
                _, inc = scale_incidence(p, s, cfg.hyperedges)
                feats.append(hyperedge_features(level, inc).matrix)
            elif cfg.hyper_mode == "patch":
                feats.append(patch_features(level, self.patch_len(s)).matrix)
            else:
                feats.append(level)
        aligned = [align_scale(h, u, p, s, cfg.merge) for s, (h, u) in enumerate(zip(feats, protos), start=1)]
        return feats, protos, aligned

    def assemble_batch(self, aligned: list[Tensor], data_emb: np.ndarray | None, batch: int) -> AssembledSequence:
        cfg = self.cfg
        parts: list[tuple[str, Tensor | None]] = []
        if cfg.use_data_prompt:
            if data_emb is None:
                raise ValueError("model uses data-correlated prompts but none were supplied")
            parts.append(("data_prompt", Tensor(data_emb)))
        parts.append(("capability_prompt", self.capability))
        for s, z in enumerate(aligned, start=1):
            parts.append((f"prompt{s}", self.params.get(f"prompt{s}")))
            parts.append((f"aligned{s}", z))
        return assemble(parts, batch)

    def forward(self, x_raw, data_emb: np.ndarray | None = None) -> ForwardResult:
        x_raw = np.asarray(x_raw, dtype=np.float64)
        if x_raw.ndim == 2:
            x_raw = x_raw[None]
        B, T, D = x_raw.shape
        if (T, D) != (self.cfg.input_length, self.cfg.channels):
            raise ShapeError(f"expected input windows of shape ({self.cfg.input_length}, {self.cfg.channels}), got {(T, D)}")
        if self.cfg.use_data_prompt and data_emb is None:
            data_emb = self.data_prompt_batch(x_raw)
        x_norm, state = revin_normalize(x_raw)
        feats, protos, aligned = self.encode(Tensor(x_norm))
        seq = self.assemble_batch(aligned, data_emb, B)
        if seq.length != self.total_length:
            raise ShapeError(f"assembled length {seq.length} != configured {self.total_length}")
        x = seq.sequence
        if "position" in self.params:
            x = x + self.params["position"]
        out = self.backbone(x)
        y_norm = project_output(out, self.params["proj.w"], self.params["proj.b"], None, self.cfg.horizon, D)
        return ForwardResult(revin_denormalize(y_norm, state), y_norm, state, seq, feats, protos, out)

    def __call__(self, x_raw, data_emb=None) -> Tensor:
        return self.forward(x_raw, data_emb).forecast

    def predict(self, x_raw, batch_size: int = 256) -> np.ndarray:
        x_raw = np.asarray(x_raw, dtype=np.float64)
        single = x_raw.ndim == 2
        if single:
            x_raw = x_raw[None]
        outs = [self.forward(x_raw[i : i + batch_size]).forecast.data for i in range(0, len(x_raw), batch_size)]
        y = np.concatenate(outs)
        return y[0] if single else y

    def attention_weights(self, x_raw) -> list[np.ndarray]:
        """Per-scale CMA weights ``(batch, J, M^s, V^s)`` for a batch of raw windows."""
        x_norm, _ = revin_normalize(np.asarray(x_raw, dtype=np.float64).reshape(-1, self.cfg.input_length, self.cfg.channels))
        feats, protos, _ = self.encode(Tensor(x_norm))
        return [
            align_scale(h, u, self.params, s, self.cfg.merge, return_weights=True)[1].data
            for s, (h, u) in enumerate(zip(feats, protos), start=1)
        ]

    def aso_loss(self, feats: list[Tensor], protos: list[Tensor], gamma: float) -> Tensor:
        total = None
        for s, (e, u) in enumerate(zip(feats, protos), start=1):
            term = loss_aso(e, prototype_value_projection(u, self.params, s, self.cfg.merge), gamma)
            total = term if total is None else total + term
        return total

    # -- persistence ------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, v in state.items():
            if v.shape != self.params[k].shape:
                raise ShapeError(f"{k}: checkpoint shape {v.shape} != model shape {self.params[k].shape}")
            self.params[k].data = np.array(v, dtype=np.float64)
