"""Define-by-run reverse-mode differentiation.

A :class:`Node` wraps a float64 numpy array. Ops build new nodes whose
``parents`` hold ``(parent, rule)`` pairs; ``rule`` maps the upstream
gradient to this parent's contribution. The graph is discarded after
:func:`backward`; nothing is cached between forward passes.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np

from ..errors import NumericError

Rule = Callable[[np.ndarray], np.ndarray]

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Build no graph inside the block; results are constants."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Node:
    __slots__ = ("value", "_grad", "parents", "requires_grad", "name")

    def __init__(self, value, parents: Sequence[tuple["Node", Rule]] = (), requires_grad=False, name=None):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim == 0:
            value = value.reshape(1)
        self.value = value
        self._grad = None
        self.parents = tuple(parents)
        self.requires_grad = bool(requires_grad)
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, g) -> None:
        self._grad = None if g is None else np.asarray(g, dtype=np.float64)

    def zero_grad(self) -> None:
        self._grad = None

    def item(self) -> float:
        if self.value.size != 1:
            raise ValueError(f"item() on a node of shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the real definitions live in ops
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, other)

    def __mul__(self, other):
        from .ops import mul
        return mul(self, other)

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


def parameter(value, name=None) -> Node:
    value = np.array(value, dtype=np.float64)
    check_finite(value, f"parameter {name}" if name else "parameter")
    return Node(value, requires_grad=True, name=name)


def constant(value) -> Node:
    return Node(value)


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def check_finite(value: np.ndarray, where: str) -> None:
    if not np.isfinite(value).all():
        raise NumericError(f"non-finite value produced by {where}")


def make_node(value: np.ndarray, parents: Sequence[tuple[Node, Rule]], where: str) -> Node:
    """Wrap an op result, keeping only the parents that need gradients."""
    check_finite(value, where)
    if not _grad_enabled:
        return Node(value)
    live = [(p, rule) for p, rule in parents if p.requires_grad]
    if not live:
        return Node(value)
    return Node(value, live, requires_grad=True)


def _topological(root: Node) -> list[Node]:
    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Node) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every node in the graph."""
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological(loss)
    local: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = local.pop(id(node), None)
        if g is None:
            continue
        node.grad = node.grad + g
        for parent, rule in node.parents:
            contrib = rule(g)
            key = id(parent)
            if key in local:
                local[key] = local[key] + contrib
            else:
                local[key] = contrib
