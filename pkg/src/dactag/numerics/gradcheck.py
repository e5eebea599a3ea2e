from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .graph import Node, backward


def relative_error(a, n, floor: float = 1e-6) -> np.ndarray:
    # floor sits above central-difference rounding noise (~1e-11) so exact zeros compare cleanly
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numerical_grad(f: Callable[[], Node], param: Node, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``param``."""
    flat = param.value.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f().item()
        flat[i] = old - eps
        down = f().item()
        flat[i] = old
        out[i] = (up - down) / (2.0 * eps)
    return out.reshape(param.shape)


def grad_check(f: Callable[[], Node], params: Sequence[Node], eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    ``f`` must rebuild its graph from ``params`` on every call and be
    deterministic (no dropout).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    for p in params:
        p.zero_grad()
    backward(f())
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()
        numeric = numerical_grad(f, p, eps)
        if analytic.size:
            worst = max(worst, float(relative_error(analytic, numeric).max()))
    return worst
