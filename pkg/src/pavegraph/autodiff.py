"""Minimal reverse-mode automatic differentiation over dense numpy tensors.

Provides exactly the operator set the forecasting model needs: matmul,
elementwise arithmetic, concat/slice/transpose/reshape, reductions, bias
broadcast, the activation zoo, layer normalization, and the segmented
gather/sum/softmax primitives that implement message passing over an edge
list. Values are float64 ndarrays; a :class:`Tensor` wraps one value
together with its parents and the VJP closure used during the backward
sweep. Graphs are acyclic by construction (ops only consume existing
tensors).

Conventions fixed here for determinism:

* leaky_relu / relu take the positive-branch derivative at exactly 0
* elu uses alpha = 1
* topological order is a deterministic DFS, so identical inputs replay
  bit-identical forward and backward passes within one build
"""

from __future__ import annotations

import os
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels

__all__ = [
    "Tensor",
    "ShapeError",
    "backward",
    "constant",
    "add",
    "sub",
    "mul",
    "scale",
    "scale_rows",
    "scale_cols",
    "matmul",
    "add_bias",
    "concat",
    "slice_axis",
    "transpose",
    "reshape",
    "tensor_sum",
    "tensor_mean",
    "gather_rows",
    "segment_sum",
    "segment_softmax",
    "relu",
    "leaky_relu",
    "elu",
    "tanh",
    "sigmoid",
    "log",
    "clip",
    "layer_norm",
]

# Opt-in finiteness checking of every op output (tests enable it; the
# training loop checks the loss instead to keep the hot path lean).
_VALIDATE = os.environ.get("PAVEGRAPH_AUTODIFF_VALIDATE") == "1"


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible; message carries both."""


class Tensor:
    """A node of the computation graph.

    ``value`` is the cached forward result, ``parents`` the input nodes and
    ``grad`` the accumulator filled by :func:`backward`. Leaf tensors
    (parameters and constants) have no parents.
    """

    __slots__ = ("value", "parents", "vjp", "grad", "name")

    def __init__(
        self,
        value: np.ndarray | float,
        parents: Sequence["Tensor"] = (),
        vjp: Callable[[np.ndarray], tuple] | None = None,
        name: str | None = None,
    ):
        arr = np.asarray(value, dtype=np.float64)
        if not parents:
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values entering graph (leaf {name!r})")
        elif _VALIDATE and not np.all(np.isfinite(arr)):
            raise FloatingPointError("non-finite op output")
        self.value = arr
        self.parents = tuple(parents)
        self.vjp = vjp
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"<Tensor{tag} shape={self.value.shape}>"


def constant(value: np.ndarray | float, name: str | None = None) -> Tensor:
    return Tensor(value, name=name)


def _topo_order(root: Tensor) -> list[Tensor]:
    """Deterministic post-order: every tensor appears after its parents."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar ``loss`` into every reachable tensor."""
    if loss.value.shape != ():
        raise ShapeError(f"backward requires a scalar node, got shape {loss.value.shape}")
    order = _topo_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.asarray(1.0)
    for node in reversed(order):
        if node.vjp is None or node.grad is None:
            continue
        for parent, g in zip(node.parents, node.vjp(node.grad)):
            if g is None:
                continue
            parent.grad = g if parent.grad is None else parent.grad + g


def _shapes(*tensors: Tensor) -> str:
    return " vs ".join(str(t.value.shape) for t in tensors)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"add: shape mismatch {_shapes(a, b)}")
    return Tensor(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"sub: shape mismatch {_shapes(a, b)}")
    return Tensor(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.shape != b.value.shape:
        raise ShapeError(f"mul: shape mismatch {_shapes(a, b)}")
    av, bv = a.value, b.value
    return Tensor(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python scalar treated as a constant."""
    c = float(c)
    return Tensor(a.value * c, (a,), lambda g: (g * c,))


def scale_rows(x: Tensor, s: Tensor) -> Tensor:
    """Multiply each row of a matrix by a per-row scalar."""
    if x.value.ndim != 2 or s.value.shape != (x.value.shape[0],):
        raise ShapeError(f"scale_rows: shape mismatch {_shapes(x, s)}")
    xv, sv = x.value, s.value
    return Tensor(
        xv * sv[:, None],
        (x, s),
        lambda g: (g * sv[:, None], (g * xv).sum(axis=1)),
    )


def scale_cols(x: Tensor, v: Tensor) -> Tensor:
    """Multiply each column of a matrix by a per-column scalar."""
    if x.value.ndim != 2 or v.value.shape != (x.value.shape[1],):
        raise ShapeError(f"scale_cols: shape mismatch {_shapes(x, v)}")
    xv, vv = x.value, v.value
    return Tensor(
        xv * vv,
        (x, v),
        lambda g: (g * vv, (g * xv).sum(axis=0)),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {_shapes(a, b)}")
    av, bv = a.value, b.value
    return Tensor(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Broadcast-add a vector bias over the leading axes of ``x``."""
    if b.value.ndim != 1 or x.value.shape[-1] != b.value.shape[0]:
        raise ShapeError(f"add_bias: shape mismatch {_shapes(x, b)}")
    axes = tuple(range(x.value.ndim - 1))
    return Tensor(x.value + b.value, (x, b), lambda g: (g, g.sum(axis=axes)))


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    values = [t.value for t in tensors]
    base = values[0].ndim
    for v in values[1:]:
        if v.ndim != base:
            raise ShapeError(f"concat: rank mismatch {[v.shape for v in values]}")
    out = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)

    def vjp(g: np.ndarray) -> tuple:
        idx = [slice(None)] * g.ndim
        grads = []
        for k in range(len(values)):
            idx[axis] = slice(offsets[k], offsets[k + 1])
            grads.append(g[tuple(idx)])
        return tuple(grads)

    return Tensor(out, tuple(tensors), vjp)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start, stop) along one axis."""
    dim = x.value.shape[axis]
    if not (0 <= start < stop <= dim):
        raise ShapeError(f"slice_axis: [{start},{stop}) out of range for axis size {dim}")
    idx = [slice(None)] * x.value.ndim
    idx[axis] = slice(start, stop)
    idx_t = tuple(idx)

    def vjp(g: np.ndarray) -> tuple:
        full = np.zeros_like(x.value)
        full[idx_t] = g
        return (full,)

    return Tensor(x.value[idx_t], (x,), vjp)


def transpose(x: Tensor) -> Tensor:
    if x.value.ndim != 2:
        raise ShapeError(f"transpose: expects 2-D, got {x.value.shape}")
    return Tensor(x.value.T.copy(), (x,), lambda g: (g.T,))


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = x.value.shape
    return Tensor(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def _reduction(x: Tensor, axis, keepdims: bool, op: str) -> Tensor:
    value = getattr(x.value, op)(axis=axis, keepdims=keepdims)
    in_shape = x.value.shape
    if axis is None:
        count = x.value.size
    else:
        count = in_shape[axis]

    def vjp(g: np.ndarray) -> tuple:
        g_full = np.asarray(g)
        if axis is not None and not keepdims:
            g_full = np.expand_dims(g_full, axis)
        g_full = np.broadcast_to(g_full, in_shape)
        if op == "mean":
            g_full = g_full / count
        return (g_full.copy(),)

    return Tensor(value, (x,), vjp)


def tensor_sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return _reduction(x, axis, keepdims, "sum")


def tensor_mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return _reduction(x, axis, keepdims, "mean")


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    """Select rows along axis 0; backward scatter-adds into the source."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather_rows: index must be 1-D, got {idx.shape}")
    n = x.value.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"gather_rows: index out of range for {n} rows")

    def vjp(g: np.ndarray) -> tuple:
        return (_kernels.scatter_add(g, idx, n).reshape(x.value.shape),)

    return Tensor(x.value[idx], (x,), vjp)


def _check_segments(num_rows: int, seg_ptr: np.ndarray) -> np.ndarray:
    ptr = np.asarray(seg_ptr, dtype=np.int64)
    if ptr.ndim != 1 or ptr[0] != 0 or ptr[-1] != num_rows:
        raise ShapeError(f"segment pointer {ptr.shape} inconsistent with {num_rows} rows")
    if np.any(np.diff(ptr) < 1):
        raise ValueError("empty segment")
    return ptr


def segment_sum(x: Tensor, seg_ptr: np.ndarray, seg_ids: np.ndarray | None = None) -> Tensor:
    """Sum row blocks of ``x`` (grouped by ``seg_ptr``) into one row each."""
    ptr = _check_segments(x.value.shape[0], seg_ptr)
    ids = np.repeat(np.arange(ptr.size - 1), np.diff(ptr)) if seg_ids is None else seg_ids
    return Tensor(
        _kernels.segment_sum(x.value, ptr),
        (x,),
        lambda g: (np.ascontiguousarray(g)[ids],),
    )


def segment_softmax(
    x: Tensor, seg_ptr: np.ndarray, seg_ids: np.ndarray | None = None
) -> Tensor:
    """Softmax within each contiguous segment of rows (max-stabilized).

    Within a segment the outputs are positive and sum to one; segments are
    independent, so a single call normalizes the attention scores of every
    destination node at once.
    """
    ptr = _check_segments(x.value.shape[0], seg_ptr)
    ids = np.repeat(np.arange(ptr.size - 1), np.diff(ptr)) if seg_ids is None else seg_ids
    alpha = _kernels.segment_softmax_forward(x.value, ptr, ids)
    return Tensor(
        alpha,
        (x,),
        lambda g: (_kernels.segment_softmax_backward(alpha, np.ascontiguousarray(g), ptr, ids),),
    )


def relu(x: Tensor) -> Tensor:
    mask = x.value >= 0
    return Tensor(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.value >= 0
    deriv = np.where(mask, 1.0, slope)
    return Tensor(np.where(mask, x.value, slope * x.value), (x,), lambda g: (g * deriv,))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    neg = alpha * np.expm1(np.minimum(x.value, 0.0))
    out = np.where(x.value > 0, x.value, neg)
    deriv = np.where(x.value > 0, 1.0, neg + alpha)
    return Tensor(out, (x,), lambda g: (g * deriv,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.value)
    return Tensor(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign for stability on large negative inputs.
    v = x.value
    out = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return Tensor(out, (x,), lambda g: (g * out * (1.0 - out),))


def log(x: Tensor) -> Tensor:
    if np.any(x.value <= 0):
        raise ValueError("log: requires strictly positive input")
    v = x.value
    return Tensor(np.log(v), (x,), lambda g: (g / v,))


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values into [lo, hi]; gradient passes only where unclamped."""
    inside = (x.value >= lo) & (x.value <= hi)
    return Tensor(np.clip(x.value, lo, hi), (x,), lambda g: (g * inside,))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of ``x`` over its last axis, then scale and shift."""
    d = x.value.shape[-1]
    if gain.value.shape != (d,) or bias.value.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must be ({d},), got {_shapes(gain, bias)}")
    mu = x.value.mean(axis=-1, keepdims=True)
    centered = x.value - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gain.value + bias.value

    def vjp(g: np.ndarray) -> tuple:
        axes = tuple(range(g.ndim - 1))
        g_gain = (g * xhat).sum(axis=axes)
        g_bias = g.sum(axis=axes)
        dxhat = g * gain.value
        # Row-wise: dx = (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)) / std
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = (dxhat - m1 - xhat * m2) * inv_std
        return (dx, g_gain, g_bias)

    return Tensor(out, (x, gain, bias), vjp)
