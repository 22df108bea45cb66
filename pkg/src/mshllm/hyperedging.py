"""Learnable hypergraph construction and hyperedge feature aggregation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Parameter, ShapeError, Tensor, ensure_tensor, matmul


@dataclass(frozen=True)
class HyperedgeConfig:
    counts: tuple[int, ...] = (16, 8, 4)
    eta: int = 3
    embed_dim: int | None = None  # None -> channel count D
    straight_through: bool = True

    def __post_init__(self):
        if any(m < 1 for m in self.counts):
            raise ValueError(f"hyperedge counts must be >= 1, got {self.counts}")
        if self.eta < 1:
            raise ValueError(f"eta must be >= 1, got {self.eta}")


@dataclass
class HyperedgeFeatures:
    matrix: Tensor
    neighbor_counts: np.ndarray

    @property
    def empty(self) -> np.ndarray:
        return self.neighbor_counts == 0


def init_hyperedge_params(
    cfg: HyperedgeConfig, node_counts, D: int, rng: np.random.Generator
) -> dict[str, Parameter]:
    k = cfg.embed_dim or D
    params = {}
    for s, (n, m) in enumerate(zip(node_counts, cfg.counts), start=1):
        params[f"hyper{s}.e_node"] = Parameter(rng.normal(0.0, 1.0, size=(n, k)), name=f"hyper{s}.e_node")
        params[f"hyper{s}.e_hyper"] = Parameter(rng.normal(0.0, 1.0, size=(m, k)), name=f"hyper{s}.e_hyper")
        params[f"hyper{s}.beta"] = Parameter(np.ones((1, 1)), name=f"hyper{s}.beta")
        params[f"hyper{s}.phi"] = Parameter(np.ones((1, 1)), name=f"hyper{s}.phi")
        params[f"hyper{s}.lin_w"] = Parameter(np.ones((1, 1)), name=f"hyper{s}.lin_w")
        params[f"hyper{s}.lin_b"] = Parameter(np.zeros((1, 1)), name=f"hyper{s}.lin_b")
    return params


def raw_incidence(e_node, e_hyper, beta, phi, lin_w=None, lin_b=None) -> Tensor:
    """``Linear(ReLU(tanh(E_node beta) tanh(E_hyper phi)^T))`` with a scalar affine ``Linear``."""
    e_node, e_hyper = ensure_tensor(e_node), ensure_tensor(e_hyper)
    if e_node.shape[-1] != e_hyper.shape[-1]:
        raise ShapeError(f"node embedding width {e_node.shape[-1]} != hyperedge embedding width {e_hyper.shape[-1]}")
    u1 = (e_node * beta).tanh()
    u2 = (e_hyper * phi).tanh()
    scores = matmul(u1, u2.T).relu()
    if lin_w is not None:
        scores = scores * lin_w
    if lin_b is not None:
        scores = scores + lin_b
    return scores


def topk_mask(raw: np.ndarray, eta: int) -> np.ndarray:
    """Binary row-wise TopK over strictly positive entries (argmax fallback, lowest-index ties)."""
    raw = np.asarray(raw, dtype=np.float64)
    n, m = raw.shape
    k = min(eta, m)
    # stable sort on the negated row puts the lowest column first among equals
    order = np.argsort(-raw, axis=1, kind="stable")[:, :k]
    mask = np.zeros((n, m))
    rows = np.arange(n)[:, None]
    picked = raw[rows, order]
    mask[rows, order] = (picked > 0).astype(np.float64)
    mask[np.arange(n), order[:, 0]] = 1.0
    return mask


def sparsify_topk(raw, eta: int, straight_through: bool = True) -> Tensor:
    """Hard TopK incidence; forward value is exactly the binary mask.

    With ``straight_through`` the upstream gradient reaches the raw scores of
    the selected entries (mask + masked raw - stopgrad(masked raw)).
    """
    raw = ensure_tensor(raw)
    mask = topk_mask(raw.data, eta)
    if not (straight_through and raw.requires_grad):
        return Tensor(mask)
    masked = raw * mask
    return masked - masked.detach() + mask


def hyperedge_features(level, inc) -> HyperedgeFeatures:
    """Row ``i`` is the mean of the node rows incident to hyperedge ``i`` (zero if none)."""
    level, inc = ensure_tensor(level), ensure_tensor(inc)
    if inc.shape[-2] != level.shape[-2]:
        raise ShapeError(f"incidence has {inc.shape[-2]} rows but the level has {level.shape[-2]} nodes")
    counts = np.rint(inc.data.sum(axis=-2)).astype(int)
    denom = np.maximum(counts, 1).astype(np.float64)[:, None]
    summed = matmul(inc.T, level)
    return HyperedgeFeatures(summed / denom, counts)


def block_incidence(n: int, patch_len: int) -> np.ndarray:
    if patch_len < 1:
        raise ValueError(f"patch_len must be >= 1, got {patch_len}")
    n_patches = -(-n // patch_len)
    inc = np.zeros((n, n_patches))
    inc[np.arange(n), np.arange(n) // patch_len] = 1.0
    return inc


def patch_features(level, patch_len: int) -> HyperedgeFeatures:
    """Average non-overlapping patches (last patch may be shorter)."""
    level = ensure_tensor(level)
    return hyperedge_features(level, Tensor(block_incidence(level.shape[-2], patch_len)))


def scale_incidence(params: dict[str, Parameter], s: int, cfg: HyperedgeConfig) -> tuple[Tensor, Tensor]:
    """``(raw, sparsified)`` incidence for scale ``s`` (1-based)."""
    raw = raw_incidence(
        params[f"hyper{s}.e_node"],
        params[f"hyper{s}.e_hyper"],
        params[f"hyper{s}.beta"],
        params[f"hyper{s}.phi"],
        params[f"hyper{s}.lin_w"],
        params[f"hyper{s}.lin_b"],
    )
    return raw, sparsify_topk(raw, cfg.eta, cfg.straight_through)
