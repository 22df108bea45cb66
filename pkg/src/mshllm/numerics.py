"""Dense float64 tensors with a define-by-run reverse-mode gradient tape.

Every forward op records a closure that pushes the upstream gradient to its
inputs; :meth:`Tensor.backward` walks the graph in reverse topological order.
The graph is rebuilt on every forward pass.
"""
from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

import numpy as np

DTYPE = np.float64


class GraphError(RuntimeError):
    """Raised on misuse of the gradient tape."""


class ShapeError(ValueError):
    pass


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=DTYPE)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self._consumed = False
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def T(self) -> "Tensor":
        return self.swapaxes(-1, -2)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # -- graph construction -----------------------------------------------
    @staticmethod
    def _make(data: np.ndarray, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Propagate d(self)/d(leaf) into every reachable tensor's ``grad``."""
        if self._consumed:
            raise GraphError("backward() already called on this graph; run a fresh forward pass")
        if grad is None:
            if self.data.size != 1:
                raise GraphError(f"backward() without grad needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.asarray(grad, dtype=DTYPE))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents:
                # free interior buffers; leaves keep their gradients
                node.grad = None
                node._parents = ()
                node._backward = None
        self._consumed = True

    # -- elementwise arithmetic ---------------------------------------------
    def __add__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        a, b = self, other

        def bw(g):
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._make(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        a, b = self, other

        def bw(g):
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(-g, b.shape))

        return Tensor._make(a.data - b.data, (a, b), bw)

    def __rsub__(self, other) -> "Tensor":
        return ensure_tensor(other) - self

    def __mul__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._make(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = ensure_tensor(other)
        a, b = self, other
        out = a.data / b.data

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * out / b.data, b.shape))

        return Tensor._make(out, (a, b), bw)

    def __rtruediv__(self, other) -> "Tensor":
        return ensure_tensor(other) / self

    def __neg__(self) -> "Tensor":
        a = self
        return Tensor._make(-a.data, (a,), lambda g: a._accumulate(-g))

    def __pow__(self, exponent: float) -> "Tensor":
        a = self
        p = float(exponent)

        def bw(g):
            a._accumulate(g * p * a.data ** (p - 1.0))

        return Tensor._make(a.data**p, (a,), bw)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)

    # -- shape ops --------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        return Tensor._make(a.data.reshape(shape), (a,), lambda g: a._accumulate(g.reshape(a.shape)))

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        a = self
        inv = np.argsort(axes)
        return Tensor._make(a.data.transpose(axes), (a,), lambda g: a._accumulate(g.transpose(inv)))

    def swapaxes(self, i: int, j: int) -> "Tensor":
        a = self
        return Tensor._make(
            np.swapaxes(a.data, i, j), (a,), lambda g: a._accumulate(np.swapaxes(g, i, j))
        )

    def __getitem__(self, idx) -> "Tensor":
        a = self

        fancy = any(isinstance(i, (list, np.ndarray)) for i in (idx if isinstance(idx, tuple) else (idx,)))

        def bw(g):
            full = np.zeros_like(a.data)
            if fancy:
                np.add.at(full, idx, g)
            else:
                full[idx] = g
            a._accumulate(full)

        return Tensor._make(a.data[idx], (a,), bw)

    # -- reductions -------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        a = self

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape))

        return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[ax] for ax in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- unary nonlinearities ----------------------------------------------
    def exp(self) -> "Tensor":
        a = self
        out = np.exp(a.data)
        return Tensor._make(out, (a,), lambda g: a._accumulate(g * out))

    def log(self) -> "Tensor":
        a = self
        return Tensor._make(np.log(a.data), (a,), lambda g: a._accumulate(g / a.data))

    def tanh(self) -> "Tensor":
        a = self
        out = np.tanh(a.data)
        return Tensor._make(out, (a,), lambda g: a._accumulate(g * (1.0 - out * out)))

    def relu(self) -> "Tensor":
        a = self
        mask = a.data > 0
        return Tensor._make(a.data * mask, (a,), lambda g: a._accumulate(g * mask))

    def sqrt(self) -> "Tensor":
        a = self
        out = np.sqrt(a.data)
        return Tensor._make(out, (a,), lambda g: a._accumulate(g * 0.5 / out))

    def detach(self) -> "Tensor":
        return Tensor(self.data)


class Parameter(Tensor):
    """A named leaf tensor; ``trainable=False`` keeps its gradient at zero."""

    __slots__ = ("trainable",)

    def __init__(self, data, trainable: bool = True, name: str | None = None):
        super().__init__(data, requires_grad=trainable, name=name)
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.trainable:
            self.grad = self.grad + g

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape}, trainable={self.trainable})"


def ensure_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def matmul(a, b) -> Tensor:
    a, b = ensure_tensor(a), ensure_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    return Tensor._make(a.data @ b.data, (a, b), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [ensure_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            t._accumulate(piece)

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def broadcast_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    x = ensure_tensor(x)
    return Tensor._make(
        np.broadcast_to(x.data, shape).copy(), (x,), lambda g: x._accumulate(_unbroadcast(g, x.shape))
    )


def softmax_rows(m: Tensor) -> Tensor:
    """Softmax along the last axis, shift-stabilised."""
    m = ensure_tensor(m)
    out = m.data - m.data.max(axis=-1, keepdims=True)
    np.exp(out, out=out)
    out /= out.sum(axis=-1, keepdims=True)

    def bw(g):
        go = g * out
        go -= out * go.sum(axis=-1, keepdims=True)
        m._accumulate(go)

    return Tensor._make(out, (m,), bw)


def linear(x: Tensor, w: Tensor, bias: Tensor | None = None) -> Tensor:
    x, w = ensure_tensor(x), ensure_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input shape {x.shape} incompatible with weight shape {w.shape}")
    out = matmul(x, w)
    if bias is not None:
        if bias.shape[-1] != w.shape[1]:
            raise ShapeError(f"linear: bias shape {bias.shape} incompatible with weight shape {w.shape}")
        out = out + bias
    return out


def aggregate_1d(x: Tensor, window: int, mode: str = "avgpool", params: Sequence[Tensor] | None = None) -> Tensor:
    """Non-overlapping windowed aggregation along the time axis (axis -2).

    ``conv`` mode takes ``params = (kernel, bias)`` with kernel of shape
    ``(window, D)`` (one depthwise kernel per channel, stride = window) and
    bias of shape ``(D,)``.
    """
    x = ensure_tensor(x)
    if window < 1:
        raise ValueError(f"window must be positive, got {window}")
    n, d = x.shape[-2], x.shape[-1]
    if n < window:
        raise ValueError(f"scale too coarse for sequence: length {n} < window {window}")
    n_out = n // window
    lead = x.shape[:-2]
    body = x if n_out * window == n else x[(..., slice(0, n_out * window), slice(None))]
    blocks = body.reshape(*lead, n_out, window, d)
    if mode == "avgpool":
        return blocks.mean(axis=-2)
    if mode == "conv":
        if params is None:
            raise ValueError("conv aggregation needs (kernel, bias) parameters")
        kernel, bias = params
        if kernel.shape != (window, d):
            raise ShapeError(f"conv kernel shape {kernel.shape} != {(window, d)}")
        return (blocks * kernel).sum(axis=-2) + bias
    raise ValueError(f"unknown aggregation mode {mode!r}")


def attention(q: Tensor, k: Tensor, v: Tensor, return_weights: bool = False):
    """Scaled dot-product attention, batched over leading axes."""
    q, k, v = ensure_tensor(q), ensure_tensor(k), ensure_tensor(v)
    d = q.shape[-1]
    if k.shape[-1] != d:
        raise ShapeError(f"attention: query width {d} != key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: {k.shape[-2]} keys but {v.shape[-2]} values")
    weights = softmax_rows(matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(d)))
    out = matmul(weights, v)
    return (out, weights) if return_weights else out


def norm(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Euclidean norm with a zero (sub)gradient at the origin."""
    x = ensure_tensor(x)
    n = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    safe = np.where(n > 0, n, 1.0)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        x._accumulate(np.where(n > 0, g * x.data / safe, 0.0))

    return Tensor._make(n if keepdims else np.squeeze(n, axis=axis), (x,), bw)


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centred = x - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    return centred / (var + eps).sqrt()


def backward(loss: Tensor) -> None:
    loss.backward()


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def parameter_hash(params: Iterable[Parameter]) -> str:
    """SHA-256 over the names, shapes and raw bytes of a parameter block."""
    h = hashlib.sha256()
    for p in params:
        h.update(str(p.name).encode())
        h.update(str(p.shape).encode())
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()


def check_finite(named: dict[str, np.ndarray]) -> str | None:
    """Name of the first non-finite array, or ``None``."""
    for name, arr in named.items():
        if not np.all(np.isfinite(arr)):
            return name
    return None
