"""Cross-modality alignment: per-scale multi-head cross-attention from hyperedge
features (queries) to text prototypes (keys and values)."""
from __future__ import annotations

import numpy as np

from .numerics import Parameter, ShapeError, Tensor, attention, ensure_tensor, matmul


def head_width(D: int, J: int) -> int:
    if J < 1 or D % J:
        raise ValueError(f"model width D={D} is not divisible by head count J={J}")
    return D // J


def init_cma_params(S: int, D: int, P: int, J: int, rng: np.random.Generator, merge: str = "concat") -> dict[str, Parameter]:
    d = head_width(D, J)
    params = {}
    for s in range(1, S + 1):
        params[f"cma{s}.wq"] = Parameter(rng.normal(0.0, 1.0 / np.sqrt(D), size=(J, D, d)), name=f"cma{s}.wq")
        params[f"cma{s}.wk"] = Parameter(rng.normal(0.0, 1.0 / np.sqrt(P), size=(J, P, d)), name=f"cma{s}.wk")
        params[f"cma{s}.wv"] = Parameter(rng.normal(0.0, 1.0 / np.sqrt(P), size=(J, P, d)), name=f"cma{s}.wv")
        width_in = J * d if merge == "concat" else d
        params[f"cma{s}.wo"] = Parameter(rng.normal(0.0, 1.0 / np.sqrt(width_in), size=(width_in, D)), name=f"cma{s}.wo")
    return params


def _merge_heads(heads: Tensor, params, s: int, merge: str) -> Tensor:
    # heads: (..., J, M, d)
    J = heads.shape[-3]
    if merge == "sum":
        return matmul(heads.sum(axis=-3), params[f"cma{s}.wo"])
    lead = heads.shape[:-3]
    M, d = heads.shape[-2], heads.shape[-1]
    order = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    stacked = heads.transpose(order).reshape(*lead, M, J * d)
    return matmul(stacked, params[f"cma{s}.wo"])


def align_scale(hyper, protos, params: dict[str, Parameter], s: int, merge: str = "concat", return_weights: bool = False):
    """``Z^s``: heads attend independently, then are concatenated and merged back to width D."""
    hyper, protos = ensure_tensor(hyper), ensure_tensor(protos)
    wq, wk, wv = params[f"cma{s}.wq"], params[f"cma{s}.wk"], params[f"cma{s}.wv"]
    if hyper.shape[-1] != wq.shape[1]:
        raise ShapeError(f"hyperedge width {hyper.shape[-1]} != query projection input {wq.shape[1]}")
    if protos.shape[-1] != wk.shape[1]:
        raise ShapeError(f"prototype width {protos.shape[-1]} != key projection input {wk.shape[1]}")
    lead = hyper.shape[:-2]
    q = matmul(hyper.reshape(*lead, 1, *hyper.shape[-2:]), wq)  # (..., J, M, d)
    k = matmul(protos, wk)  # (J, V, d)
    v = matmul(protos, wv)
    heads, weights = attention(q, k, v, return_weights=True)
    z = _merge_heads(heads, params, s, merge)
    return (z, weights) if return_weights else z


def align_all(hyper_sets, proto_bank, params: dict[str, Parameter], merge: str = "concat", scale_ids=None) -> list[Tensor]:
    if len(hyper_sets) != len(proto_bank):
        raise ValueError(f"{len(hyper_sets)} hyperedge sets but {len(proto_bank)} prototype levels")
    scale_ids = scale_ids or range(1, len(hyper_sets) + 1)
    return [align_scale(h, u, params, s, merge) for h, u, s in zip(hyper_sets, proto_bank, scale_ids)]


def prototype_value_projection(protos, params: dict[str, Parameter], s: int, merge: str = "concat") -> Tensor:
    """Prototypes pushed through the value path and head merge, giving width D rows."""
    v = matmul(ensure_tensor(protos), params[f"cma{s}.wv"])  # (J, V, d)
    return _merge_heads(v, params, s, merge)
