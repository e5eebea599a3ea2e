"""Differentiable dense ops on :class:`~dactag.numerics.graph.Node`."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .graph import Node, as_node, make_node


def _check_broadcast(sa: tuple[int, ...], sb: tuple[int, ...], op: str) -> None:
    if sa == sb:
        return
    ok = len(sa) == len(sb) and len(sa) > 0
    if ok:
        for axis, (x, y) in enumerate(zip(sa, sb)):
            if x == y:
                continue
            if (x != 1 and y != 1) or axis not in (0, len(sa) - 1):
                ok = False
                break
    if not ok:
        raise ValueError(f"{op}: cannot broadcast shapes {sa} and {sb}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True)


def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _check_broadcast(a.shape, b.shape, "add")
    sa, sb = a.shape, b.shape
    return make_node(
        a.value + b.value,
        [(a, lambda g: _unbroadcast(g, sa)), (b, lambda g: _unbroadcast(g, sb))],
        "add",
    )


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _check_broadcast(a.shape, b.shape, "sub")
    sa, sb = a.shape, b.shape
    return make_node(
        a.value - b.value,
        [(a, lambda g: _unbroadcast(g, sa)), (b, lambda g: -_unbroadcast(g, sb))],
        "sub",
    )


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _check_broadcast(a.shape, b.shape, "mul")
    av, bv = a.value, b.value
    return make_node(
        av * bv,
        [(a, lambda g: _unbroadcast(g * bv, av.shape)), (b, lambda g: _unbroadcast(g * av, bv.shape))],
        "mul",
    )


def elementwise(a, b, op: str) -> Node:
    """Dispatch ``op`` in {"add", "sub", "mul"}."""
    try:
        fn = {"add": add, "sub": sub, "mul": mul}[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(a, b)


def scale(a: Node, c: float) -> Node:
    a = as_node(a)
    c = float(c)
    return make_node(a.value * c, [(a, lambda g: g * c)], "scale")


def matmul(a, b) -> Node:
    """``a[..., k] @ b[k, n]``. Leading dims of ``a`` are batch dims."""
    a, b = as_node(a), as_node(b)
    if b.value.ndim != 2 or a.value.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    av, bv = a.value, b.value

    def grad_b(g):
        return av.reshape(-1, av.shape[-1]).T @ g.reshape(-1, g.shape[-1])

    return make_node(av @ bv, [(a, lambda g: g @ bv.T), (b, grad_b)], "matmul")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Node) -> Node:
    a = as_node(a)
    s = _sigmoid(a.value)
    return make_node(s, [(a, lambda g: g * s * (1.0 - s))], "sigmoid")


def tanh(a: Node) -> Node:
    a = as_node(a)
    t = np.tanh(a.value)
    return make_node(t, [(a, lambda g: g * (1.0 - t * t))], "tanh")


def activation(a: Node, f: str) -> Node:
    if f == "sigmoid":
        return sigmoid(a)
    if f == "tanh":
        return tanh(a)
    raise ValueError(f"unknown activation {f!r}")


def exp(a: Node) -> Node:
    a = as_node(a)
    with np.errstate(over="ignore"):  # overflow surfaces as NumericError below
        e = np.exp(a.value)
    return make_node(e, [(a, lambda g: g * e)], "exp")


def softmax(a: Node, axis: int = -1) -> Node:
    a = as_node(a)
    x = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(x)
    s = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        return s * (g - (g * s).sum(axis=axis, keepdims=True))

    return make_node(s, [(a, rule)], "softmax")


def log_softmax(a: Node, axis: int = -1) -> Node:
    a = as_node(a)
    x = a.value - a.value.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(x).sum(axis=axis, keepdims=True))
    out = x - lse
    s = np.exp(out)

    def rule(g):
        return g - s * g.sum(axis=axis, keepdims=True)

    return make_node(out, [(a, rule)], "log_softmax")


def concat(nodes: Sequence[Node], axis: int = -1) -> Node:
    nodes = [as_node(n) for n in nodes]
    vals = [n.value for n in nodes]
    out = np.concatenate(vals, axis=axis)
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [v.shape[ax] for v in vals])
    parents = []
    for i, n in enumerate(nodes):
        lo, hi = int(bounds[i]), int(bounds[i + 1])
        sl = tuple(slice(lo, hi) if d == ax else slice(None) for d in range(out.ndim))
        parents.append((n, lambda g, sl=sl: g[sl]))
    return make_node(out, parents, "concat")


def stack(nodes: Sequence[Node], axis: int = 0) -> Node:
    nodes = [as_node(n) for n in nodes]
    out = np.stack([n.value for n in nodes], axis=axis)
    parents = [(n, lambda g, i=i: np.take(g, i, axis=axis)) for i, n in enumerate(nodes)]
    return make_node(out, parents, "stack")


def mean(a: Node, axis: int = 0) -> Node:
    a = as_node(a)
    count = a.shape[axis]
    shape = a.shape

    def rule(g):
        return np.broadcast_to(np.expand_dims(g, axis) / count, shape).copy()

    return make_node(a.value.mean(axis=axis), [(a, rule)], "mean")


def sum(a: Node, axis: int | None = None) -> Node:  # noqa: A001
    a = as_node(a)
    shape = a.shape
    if axis is None:
        return make_node(np.array([a.value.sum()]), [(a, lambda g: np.full(shape, g.reshape(-1)[0]))], "sum")

    def rule(g):
        return np.broadcast_to(np.expand_dims(g, axis), shape).copy()

    return make_node(a.value.sum(axis=axis), [(a, rule)], "sum")


def reshape(a: Node, shape: Sequence[int]) -> Node:
    a = as_node(a)
    old = a.shape
    return make_node(a.value.reshape(shape), [(a, lambda g: g.reshape(old))], "reshape")


def take(a: Node, index: int, axis: int = 0) -> Node:
    """Drop ``axis`` by selecting one position along it."""
    a = as_node(a)
    shape = a.shape
    ax = axis % len(shape)

    def rule(g):
        out = np.zeros(shape)
        sl = tuple(index if d == ax else slice(None) for d in range(len(shape)))
        out[sl] = g
        return out

    return make_node(np.take(a.value, index, axis=ax), [(a, rule)], "take")


def slice_axis(a: Node, start: int, stop: int, axis: int = -1) -> Node:
    a = as_node(a)
    shape = a.shape
    ax = axis % len(shape)
    sl = tuple(slice(start, stop) if d == ax else slice(None) for d in range(len(shape)))

    def rule(g):
        out = np.zeros(shape)
        out[sl] = g
        return out

    return make_node(a.value[sl], [(a, rule)], "slice")


def embedding_lookup(table: Node, ids) -> Node:
    """Rows of ``table`` at ``ids`` (any int array shape); output ``ids.shape + (d,)``."""
    ids = np.asarray(ids, dtype=np.int64)
    V = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        bad = ids[(ids < 0) | (ids >= V)][0]
        raise IndexError(f"embedding id {int(bad)} out of range for table of {V} rows")
    shape = table.shape

    def rule(g):
        out = np.zeros(shape)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[1]))
        return out

    return make_node(table.value[ids], [(table, rule)], "embedding_lookup")


def index_select(a: Node, idx, axis: int = 0) -> Node:
    """Gather positions ``idx`` along ``axis`` (repeats allowed)."""
    a = as_node(a)
    idx = np.asarray(idx, dtype=np.int64)
    shape = a.shape
    ax = axis % len(shape)

    def rule(g):
        out = np.zeros(shape)
        np.add.at(np.moveaxis(out, ax, 0), idx, np.moveaxis(g, ax, 0))
        return out

    return make_node(np.take(a.value, idx, axis=ax), [(a, rule)], "index_select")


def pick(a: Node, idx) -> Node:
    """``out[i] = a[i, idx[i]]`` for a 2-D ``a``."""
    a = as_node(a)
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.shape[0])
    shape = a.shape

    def rule(g):
        out = np.zeros(shape)
        out[rows, idx] = g
        return out

    return make_node(a.value[rows, idx], [(a, rule)], "pick")


def dropout(a: Node, p: float, rng, training: bool) -> Node:
    """Inverted dropout: surviving units are scaled by 1/(1-p)."""
    a = as_node(a)
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    return make_node(a.value * keep, [(a, lambda g: g * keep)], "dropout")


def transpose(a: Node, axes: Sequence[int]) -> Node:
    a = as_node(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_node(np.transpose(a.value, axes), [(a, lambda g: np.transpose(g, inverse))], "transpose")


def linear(x: Node, W: Node, b: Node) -> Node:
    """``x @ W + b`` with ``b`` of shape [1, n]; leading dims of ``x`` are flattened for the bias add."""
    lead = x.shape[:-1]
    flat = reshape(x, (-1, x.shape[-1])) if len(lead) != 1 else x
    out = add(matmul(flat, W), b)
    return reshape(out, lead + (W.shape[1],)) if len(lead) != 1 else out
