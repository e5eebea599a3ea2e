"""Linear-chain CRF baseline over the W tags of a window.

Potentials are additive in log space: a unary score per (slot, tag) projected
from the encoder's slot states, plus a transition score per (previous tag,
tag). Row ``Y`` of the transition matrix holds BOS -> tag scores. Padding
slots are cut off: each chain starts at the window's first real slot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import numerics as nx
from .encoder import EncoderOutput, ParamStore, uniform_init
from .numerics import Node, Rng


@dataclass
class CrfParams:
    transitions: Node  # [Y+1, Y]
    phi_W: Node  # [2*d_enc, Y]
    phi_b: Node  # [1, Y]

    @property
    def n_tags(self) -> int:
        return self.transitions.shape[1]

    @classmethod
    def create(cls, store: ParamStore, d_in: int, n_tags: int, rng: Rng) -> "CrfParams":
        return cls(
            store.add("crf.trans", np.zeros((n_tags + 1, n_tags))),
            store.add("crf.phi.W", uniform_init(rng, (d_in, n_tags), n_tags)),
            store.add("crf.phi.b", np.zeros((1, n_tags))),
        )

    @classmethod
    def bind(cls, store: ParamStore) -> "CrfParams":
        return cls(store["crf.trans"], store["crf.phi.W"], store["crf.phi.b"])


def _as_batch(unary, start):
    unary = np.asarray(unary, dtype=np.float64)
    single = unary.ndim == 2
    if single:
        unary = unary[None]
    if start is None:
        start = np.zeros(unary.shape[0], dtype=np.int64)
    return np.ascontiguousarray(unary), np.ascontiguousarray(np.atleast_1d(start), dtype=np.int64), single


def crf_score(tags, unary, transitions, start: int = 0) -> float:
    """Log-potential of one path: sum of unary + transition scores from slot ``start``."""
    tags = np.asarray(tags)
    unary = np.asarray(unary)
    Y = unary.shape[1]
    if len(tags) != unary.shape[0]:
        raise ValueError("path length must equal the number of slots")
    total = 0.0
    prev = Y
    for t in range(start, len(tags)):
        total += unary[t, tags[t]] + transitions[prev, tags[t]]
        prev = tags[t]
    return float(total)


def crf_log_partition(unary, transitions, start=None):
    """log Z by the forward recursion; [W, Y] -> float, [B, W, Y] -> [B]."""
    u, s, single = _as_batch(unary, start)
    logz, _ = kernels.crf_forward(u, np.ascontiguousarray(transitions, dtype=np.float64), s)
    return float(logz[0]) if single else logz


def viterbi(unary, transitions, start=None):
    """Best path (ties to the lower tag index); -1 marks cut-off slots."""
    u, s, single = _as_batch(unary, start)
    paths, scores = kernels.crf_viterbi(u, np.ascontiguousarray(transitions, dtype=np.float64), s)
    return (paths[0], float(scores[0])) if single else (paths, scores)


def crf_nll_op(unary: Node, transitions: Node, gold: np.ndarray, start: np.ndarray) -> Node:
    """Mean over windows of log Z - score(gold), with forward-backward gradients.

    unary [B, W, Y]; gold [B, W] (entries before ``start`` ignored).
    """
    u = np.ascontiguousarray(unary.value)
    tr = np.ascontiguousarray(transitions.value)
    start = np.ascontiguousarray(start, dtype=np.int64)
    B, W, Y = u.shape
    logz, alpha = kernels.crf_forward(u, tr, start)
    gold_unary = np.zeros_like(u)
    gold_trans = np.zeros_like(tr)
    scores = np.empty(B)
    for b in range(B):
        s = int(start[b])
        prev = Y
        total = 0.0
        for t in range(s, W):
            y = int(gold[b, t])
            gold_unary[b, t, y] += 1.0
            gold_trans[prev, y] += 1.0
            total += u[b, t, y] + tr[prev, y]
            prev = y
        scores[b] = total
    memo: dict = {}

    def marg():
        if "m" not in memo:
            memo["m"] = kernels.crf_marginals(u, tr, start, logz, alpha)
        return memo["m"]

    def d_unary(g):
        return (g[0] / B) * (marg()[0] - gold_unary)

    def d_trans(g):
        return (g[0] / B) * (marg()[1] - gold_trans)

    value = np.array([np.mean(logz - scores)])
    return nx.make_node(value, [(unary, d_unary), (transitions, d_trans)], "crf_nll")


class CrfLayer:
    def __init__(self, params: CrfParams):
        self.params = params

    def unaries(self, enc: EncoderOutput) -> Node:
        """[B, W, Y] unary scores from slot states [W, B, d]."""
        p = self.params
        return nx.transpose(nx.linear(enc.slot_states, p.phi_W, p.phi_b), (1, 0, 2))

    def nll(self, enc: EncoderOutput, gold: np.ndarray, start: np.ndarray) -> Node:
        return crf_nll_op(self.unaries(enc), self.params.transitions, gold, start)

    def decode(self, enc: EncoderOutput, start: np.ndarray) -> np.ndarray:
        paths, _ = viterbi(self.unaries(enc).value, self.params.transitions.value, start)
        return paths
