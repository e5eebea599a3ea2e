"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Arrays are float64, C-contiguous. Gate order inside the packed GRU
matrices is (update z, reset r, candidate n).
"""
from __future__ import annotations

import numpy as np

NAME = "numpy"


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_scan_forward(xw, h0, U, mask, keep, reverse):
    """Run a GRU over the time axis of pre-projected inputs.

    xw:   [T, B, 3H]  input projections x @ W + b
    h0:   [B, H]      initial state
    U:    [H, 3H]     recurrent weights
    mask: [T, B]      1 = real step, 0 = carry the previous state unchanged
    keep: [T, B]      multiplier on the previous state before the step (0 = reset)

    Returns ``(hs, z, r, n, hp)``; the last four are the cache for backward.
    """
    T, B, H3 = xw.shape
    H = H3 // 3
    hs = np.empty((T, B, H))
    z = np.empty((T, B, H))
    r = np.empty((T, B, H))
    n = np.empty((T, B, H))
    hp = np.empty((T, B, H))
    Uzr = U[:, : 2 * H]
    Un = U[:, 2 * H :]
    h = h0
    order = range(T - 1, -1, -1) if reverse else range(T)
    for t in order:
        hpt = keep[t][:, None] * h
        a = xw[t]
        zr = _sigmoid(a[:, : 2 * H] + hpt @ Uzr)
        zt = zr[:, :H]
        rt = zr[:, H:]
        nt = np.tanh(a[:, 2 * H :] + (rt * hpt) @ Un)
        hn = (1.0 - zt) * nt + zt * hpt
        m = mask[t][:, None]
        h = m * hn + (1.0 - m) * h
        hs[t] = h
        z[t] = zt
        r[t] = rt
        n[t] = nt
        hp[t] = hpt
    return hs, z, r, n, hp


def gru_scan_backward(dhs, U, mask, keep, reverse, z, r, n, hp):
    """Backpropagate through :func:`gru_scan_forward`.

    Returns ``(dxw, dU, dh0)``.
    """
    T, B, H = dhs.shape
    Uzr = U[:, : 2 * H]
    Un = U[:, 2 * H :]
    dxw = np.empty((T, B, 3 * H))
    dU = np.zeros_like(U)
    dh = np.zeros((B, H))
    order = range(T) if reverse else range(T - 1, -1, -1)
    for t in order:
        dh = dh + dhs[t]
        m = mask[t][:, None]
        dhn = m * dh
        dprev = (1.0 - m) * dh
        zt, rt, nt, hpt = z[t], r[t], n[t], hp[t]
        dz = dhn * (hpt - nt)
        dn = dhn * (1.0 - zt)
        dhp = dhn * zt
        dan = dn * (1.0 - nt * nt)
        dU[:, 2 * H :] += (rt * hpt).T @ dan
        drh = dan @ Un.T
        dr = drh * hpt
        dhp += drh * rt
        dazr = np.concatenate([dz * zt * (1.0 - zt), dr * rt * (1.0 - rt)], axis=1)
        dU[:, : 2 * H] += hpt.T @ dazr
        dhp += dazr @ Uzr.T
        dxw[t, :, : 2 * H] = dazr
        dxw[t, :, 2 * H :] = dan
        dh = dprev + keep[t][:, None] * dhp
    return dxw, dU, dh


def _logsumexp(a, axis):
    mx = a.max(axis=axis, keepdims=True)
    return (mx + np.log(np.exp(a - mx).sum(axis=axis, keepdims=True))).squeeze(axis)


def crf_forward(unary, trans, start):
    """Log-space forward recursion of a linear-chain CRF.

    unary: [B, W, Y]; trans: [Y+1, Y] with the last row holding BOS -> tag
    scores; start: [B] first real slot of each chain. Slots before ``start``
    are skipped entirely.

    Returns ``(logZ [B], alpha [B, W, Y])``; alpha is zero before ``start``.
    """
    B, W, Y = unary.shape
    alpha = np.zeros((B, W, Y))
    logz = np.empty(B)
    pair = trans[:Y]
    for b in range(B):
        s = int(start[b])
        alpha[b, s] = trans[Y] + unary[b, s]
        for t in range(s + 1, W):
            alpha[b, t] = _logsumexp(alpha[b, t - 1][:, None] + pair, 0) + unary[b, t]
        logz[b] = _logsumexp(alpha[b, W - 1], 0)
    return logz, alpha


def crf_marginals(unary, trans, start, logz, alpha):
    """Node and edge marginals from the forward table.

    Returns ``(node [B, W, Y], edge [Y+1, Y])`` where ``edge`` is summed over
    the batch and its last row counts the BOS transitions.
    """
    B, W, Y = unary.shape
    node = np.zeros((B, W, Y))
    edge = np.zeros((Y + 1, Y))
    pair = trans[:Y]
    for b in range(B):
        s = int(start[b])
        beta = np.zeros((W, Y))
        for t in range(W - 2, s - 1, -1):
            beta[t] = _logsumexp(pair + (unary[b, t + 1] + beta[t + 1])[None, :], 1)
        node[b, s:] = np.exp(alpha[b, s:] + beta[s:] - logz[b])
        edge[Y] += node[b, s]
        for t in range(s + 1, W):
            e = alpha[b, t - 1][:, None] + pair + (unary[b, t] + beta[t])[None, :]
            edge[:Y] += np.exp(e - logz[b])
    return node, edge


def crf_viterbi(unary, trans, start):
    """Max-product decoding. Ties resolve to the lower tag index.

    Returns ``(paths [B, W] int64 with -1 before start, scores [B])``.
    """
    B, W, Y = unary.shape
    paths = np.full((B, W), -1, dtype=np.int64)
    scores = np.empty(B)
    pair = trans[:Y]
    for b in range(B):
        s = int(start[b])
        delta = trans[Y] + unary[b, s]
        back = np.zeros((W, Y), dtype=np.int64)
        for t in range(s + 1, W):
            cand = delta[:, None] + pair
            back[t] = np.argmax(cand, axis=0)
            delta = cand[back[t], np.arange(Y)] + unary[b, t]
        best = int(np.argmax(delta))
        scores[b] = delta[best]
        paths[b, W - 1] = best
        for t in range(W - 1, s, -1):
            best = int(back[t, best])
            paths[b, t - 1] = best
    return paths, scores
