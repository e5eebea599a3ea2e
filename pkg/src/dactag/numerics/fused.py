"""Graph ops backed by the compiled kernels."""
from __future__ import annotations

import numpy as np

from .. import kernels
from .graph import Node, as_node, make_node


def gru_scan(xs: Node, h0: Node, W: Node, U: Node, b: Node, mask=None, keep=None, reverse=False) -> Node:
    """GRU over axis 0 of ``xs`` [T, B, d_in]; returns every state [T, B, H].

    Gates are packed (z, r, n) along the last axis of ``W`` [d_in, 3H],
    ``U`` [H, 3H] and ``b`` [1, 3H]:

        z = sigmoid(x W_z + h U_z + b_z)
        r = sigmoid(x W_r + h U_r + b_r)
        n = tanh(x W_n + (r * h) U_n + b_n)
        h' = (1 - z) * n + z * h

    ``mask[t, i] == 0`` carries the previous state through step t unchanged.
    ``keep[t, i] == 0`` zeroes the previous state before step t (a reset).
    ``reverse`` walks t from T-1 down to 0.
    """
    xs, h0 = as_node(xs), as_node(h0)
    T, B, d_in = xs.shape
    H = U.shape[0]
    if W.shape != (d_in, 3 * H) or U.shape != (H, 3 * H) or b.shape != (1, 3 * H) or h0.shape != (B, H):
        raise ValueError(
            f"gru_scan: shape mismatch xs={xs.shape} h0={h0.shape} W={W.shape} U={U.shape} b={b.shape}"
        )
    mask = np.ones((T, B)) if mask is None else np.ascontiguousarray(mask, dtype=np.float64)
    keep = np.ones((T, B)) if keep is None else np.ascontiguousarray(keep, dtype=np.float64)
    x2 = xs.value.reshape(T * B, d_in)
    with np.errstate(over="ignore", invalid="ignore"):  # non-finite states raise NumericError below
        xw = np.ascontiguousarray((x2 @ W.value + b.value).reshape(T, B, 3 * H))
    Uv = np.ascontiguousarray(U.value)
    hs, z, r, n, hp = kernels.gru_scan_forward(xw, np.ascontiguousarray(h0.value), Uv, mask, keep, bool(reverse))
    memo: dict = {}

    def grads(g):
        if memo.get("g") is not g:
            memo["g"] = g
            dxw, dU, dh0 = kernels.gru_scan_backward(
                np.ascontiguousarray(g), Uv, mask, keep, bool(reverse), z, r, n, hp
            )
            memo["out"] = (dxw.reshape(T * B, 3 * H), dU, dh0)
        return memo["out"]

    Wv = W.value
    parents = [
        (xs, lambda g: (grads(g)[0] @ Wv.T).reshape(T, B, d_in)),
        (h0, lambda g: grads(g)[2]),
        (W, lambda g: x2.T @ grads(g)[0]),
        (U, lambda g: grads(g)[1]),
        (b, lambda g: grads(g)[0].sum(axis=0, keepdims=True)),
    ]
    return make_node(hs, parents, "gru_scan")
