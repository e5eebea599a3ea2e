"""Breadth-synchronous beam search over fixed-length tag sequences.

Hypotheses are scored by log P / lp(len) with
lp(len) = (5 + len)^alpha / 6^alpha. There is no end symbol: every
hypothesis is exactly W tags long. Padding slots take the PAD tag at no
cost, so they never branch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .corpus import WindowBatch
from .decoder import previous_tags


def length_penalty(length: int, alpha_lp: float) -> float:
    if length < 0 or alpha_lp < 0:
        raise ValueError("length and alpha_lp must be non-negative")
    return (5.0 + length) ** alpha_lp / 6.0 ** alpha_lp


@dataclass
class BeamHypothesis:
    tags: np.ndarray  # [W]
    logp: float
    score: float
    hidden: np.ndarray  # decoder state after the last step
    attention: np.ndarray | None = None  # [W steps, W slots]

    @property
    def prob(self) -> float:
        return float(np.exp(self.logp))


def _order(score, logp, seqs):
    # lexsort: last key is primary
    keys = [seqs[:, j] for j in range(seqs.shape[1] - 1, -1, -1)]
    return np.lexsort(keys + [-logp, -score])


def beam_search(model, batch: WindowBatch, B: int, alpha_lp: float = 0.65) -> list[list[BeamHypothesis]]:
    """Top-``B`` complete hypotheses per window, best first.

    Ranking: score desc, then logp desc, then the tag-index sequence ascending.
    """
    if B < 1:
        raise ValueError("beam size must be >= 1")
    dec = model.decoder
    Y = model.n_tags
    pad = model.tagset.pad
    N, W = batch.size, batch.width
    with nx.no_grad():
        enc = model.encode(batch)
        state = dec.start(enc).select(np.repeat(np.arange(N), B))
        hyp_logp = np.full((N, B), -np.inf)
        hyp_logp[:, 0] = 0.0
        seqs = np.full((N, B, W), pad, dtype=np.int64)
        for k in range(W):
            prev = previous_tags(seqs.reshape(N * B, W), k, dec.n_tags)
            step_logp, state = dec.step(state, prev)
            cand = hyp_logp[:, :, None] + step_logp.value.reshape(N, B, Y)
            new_rows = np.zeros(N * B, dtype=np.int64)
            new_logp = np.full((N, B), -np.inf)
            new_seqs = np.full((N, B, W), pad, dtype=np.int64)
            lp = length_penalty(k + 1, alpha_lp)
            for n in range(N):
                if batch.real[n, k]:
                    c_logp = cand[n].reshape(-1)
                    parent = np.repeat(np.arange(B), Y)
                    tag = np.tile(np.arange(Y), B)
                else:
                    c_logp = hyp_logp[n]
                    parent = np.arange(B)
                    tag = np.full(B, pad)
                ok = np.isfinite(c_logp)
                c_logp, parent, tag = c_logp[ok], parent[ok], tag[ok]
                c_seq = seqs[n, parent, : k + 1].copy()
                c_seq[:, k] = tag
                top = _order(c_logp / lp, c_logp, c_seq)[:B]
                m = len(top)
                new_logp[n, :m] = c_logp[top]
                new_seqs[n, :m, : k + 1] = c_seq[top]
                new_rows[n * B : n * B + m] = n * B + parent[top]
                new_rows[n * B + m : (n + 1) * B] = n * B + parent[top[0]]
            hyp_logp, seqs = new_logp, new_seqs
            state = state.select(new_rows)
    hidden = state.hidden.value.reshape(N, B, -1)
    attn = np.stack(state.attention, axis=1).reshape(N, B, W, W) if state.attention else None
    out = []
    for n in range(N):
        hyps = []
        for i in range(B):
            if not np.isfinite(hyp_logp[n, i]):
                break
            lg = float(hyp_logp[n, i])
            hyps.append(BeamHypothesis(
                seqs[n, i].copy(), lg, lg / length_penalty(W, alpha_lp), hidden[n, i].copy(),
                None if attn is None else attn[n, i].copy(),
            ))
        out.append(hyps)
    return out


def candidate_set(model, batch: WindowBatch, B: int, alpha_lp: float = 0.65) -> list[list[tuple[np.ndarray, float]]]:
    """Per window, the beam's complete sequences with P(sequence | window)."""
    return [[(h.tags, h.prob) for h in hyps] for hyps in beam_search(model, batch, B, alpha_lp)]
