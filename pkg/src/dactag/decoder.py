"""Autoregressive tag decoder with optional (guided) attention.

Per step k: input = [tag embedding of the previous tag, context c_k],
h_k = GRU(input, h_{k-1}), log P(y_k | ...) = log_softmax(h_k W_out + b_out).
The context comes from one of four regimes:

* ``none``   no context vector at all
* ``vanilla`` softmax over a(h_{k-1}, h^s_j)
* ``soft``   softmax over a(h_{k-1}, h^s_j) + [j == k]
* ``hard``   one-hot at j == k, no scoring
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .encoder import EncoderOutput, GruCellParams, ParamStore, gru_cell, uniform_init
from .numerics import Node, Rng

ATTENTION_MODES = ("none", "vanilla", "soft", "hard")


def align_score(h_dec: Node, h_s: Node, W1: Node, W2: Node, b: Node, v: Node) -> Node:
    """a(h_dec, h_s) = v . tanh(h_dec W1 + h_s W2 + b) for single vectors; returns [1]."""
    h_dec = nx.reshape(nx.as_node(h_dec), (1, -1))
    h_s = nx.reshape(nx.as_node(h_s), (1, -1))
    hidden = nx.tanh(nx.add(nx.add(nx.matmul(h_dec, W1), nx.matmul(h_s, W2)), b))
    return nx.reshape(nx.matmul(hidden, v), (1,))


@dataclass
class Memory:
    """Encoder-side tensors reused at every decoder step."""

    slot_states: Node  # [W, R, 2*d_enc]
    projected: Node | None  # [W, R, d_att] = h^s W2 + b, only for scored attention

    @property
    def width(self) -> int:
        return self.slot_states.shape[0]

    def select(self, rows) -> "Memory":
        proj = None if self.projected is None else nx.index_select(self.projected, rows, axis=1)
        return Memory(nx.index_select(self.slot_states, rows, axis=1), proj)


@dataclass
class DecoderState:
    hidden: Node  # [R, d_dec]
    memory: Memory
    step: int = 0
    attention: list = field(default_factory=list)  # one [R, W] array per finished step

    def select(self, rows) -> "DecoderState":
        rows = np.asarray(rows)
        return DecoderState(
            nx.index_select(self.hidden, rows, axis=0),
            self.memory.select(rows),
            self.step,
            [a[rows] for a in self.attention],
        )


class Decoder:
    def __init__(self, mode: str, store: ParamStore, n_tags: int, d_enc: int, d_dec: int,
                 dropout: float = 0.0, rng: Rng | None = None):
        if mode not in ATTENTION_MODES:
            raise ValueError(f"unknown attention mode {mode!r}")
        self.mode = mode
        self.store = store
        self.n_tags = n_tags
        self.d_dec = d_dec
        self.dropout = dropout
        d_ctx = 0 if mode == "none" else 2 * d_enc
        if rng is None:
            self.cell = GruCellParams.bind(store, "dec.cell")
            return
        # rows: real tags, then BOS, then PAD
        store.add("dec.tag_embed", rng.uniform(-0.1, 0.1, (n_tags + 2, d_dec)))
        store.add("dec.init.W", uniform_init(rng, (2 * d_enc, d_dec), d_dec))
        store.add("dec.init.b", np.zeros((1, d_dec)))
        self.cell = GruCellParams.create(store, "dec.cell", d_dec + d_ctx, d_dec, rng)
        store.add("dec.out.W", uniform_init(rng, (d_dec, n_tags), d_dec))
        store.add("dec.out.b", np.zeros((1, n_tags)))
        if mode in ("vanilla", "soft"):
            d_att = d_dec
            store.add("dec.att.W1", uniform_init(rng, (d_dec, d_att), d_att))
            store.add("dec.att.W2", uniform_init(rng, (2 * d_enc, d_att), d_att))
            store.add("dec.att.b", np.zeros((1, d_att)))
            store.add("dec.att.v", uniform_init(rng, (d_att, 1), d_att))

    def __getitem__(self, name: str) -> Node:
        return self.store[name]

    def init_hidden(self, summary: Node) -> Node:
        """h_{-1} = tanh(H W_init + b_init), bridging 2*d_enc to d_dec."""
        return nx.tanh(nx.add(nx.matmul(summary, self["dec.init.W"]), self["dec.init.b"]))

    def start(self, enc: EncoderOutput) -> DecoderState:
        projected = None
        if self.mode in ("vanilla", "soft"):
            projected = nx.linear(enc.slot_states, self["dec.att.W2"], self["dec.att.b"])
        return DecoderState(self.init_hidden(enc.summary), Memory(enc.slot_states, projected))

    def attend(self, state: DecoderState) -> tuple[np.ndarray | None, Node | None]:
        """Attention row over slots for the current step and the context vector.

        Returns ``(alpha [R, W] array, context [R, 2*d_enc])``.
        """
        mem, k = state.memory, state.step
        W = mem.width
        if k >= W:
            raise ValueError(f"decoder step {k} beyond window of {W}")
        if self.mode == "none":
            return None, None
        R = mem.slot_states.shape[1]
        if self.mode == "hard":
            alpha = np.zeros((R, W))
            alpha[:, k] = 1.0
            return alpha, nx.take(mem.slot_states, k, axis=0)
        query = nx.matmul(state.hidden, self["dec.att.W1"])  # [R, d_att]
        hidden = nx.tanh(nx.add(mem.projected, nx.reshape(query, (1,) + query.shape)))
        scores = nx.matmul(hidden, self["dec.att.v"])  # [W, R, 1]
        if self.mode == "soft":
            guide = np.zeros((W, R, 1))
            guide[k] = 1.0
            scores = nx.add(scores, guide)
        weights = nx.softmax(scores, axis=0)
        context = nx.sum(nx.mul(weights, mem.slot_states), axis=0)
        return weights.value[:, :, 0].T.copy(), context

    def step(self, state: DecoderState, prev_tags, training=False, rng: Rng | None = None) -> tuple[Node, DecoderState]:
        """Advance one step given the previous tag ids [R]; returns log-probs [R, n_tags]."""
        alpha, context = self.attend(state)
        inp = nx.embedding_lookup(self["dec.tag_embed"], np.asarray(prev_tags, dtype=np.int64))
        if context is not None:
            inp = nx.concat([inp, context], axis=1)
        inp = nx.dropout(inp, self.dropout, rng, training)
        h = gru_cell(inp, state.hidden, self.cell)
        logits = nx.add(nx.matmul(h, self["dec.out.W"]), self["dec.out.b"])
        attn = state.attention + ([alpha] if alpha is not None else [])
        return nx.log_softmax(logits, axis=1), DecoderState(h, state.memory, state.step + 1, attn)


def previous_tags(tags: np.ndarray, k: int, bos: int) -> np.ndarray:
    return np.full(tags.shape[0], bos, dtype=np.int64) if k == 0 else tags[:, k - 1]


def decode_window(decoder: Decoder, enc: EncoderOutput, real: np.ndarray, pad_tag: int,
                  teacher_tags: np.ndarray | None = None, training=False, rng: Rng | None = None):
    """Run all W steps.

    With ``teacher_tags`` [R, W] the gold previous tag is fed back; otherwise
    the argmax. Padding slots always emit and feed back the PAD tag.
    Returns ``(log_probs: list of W [R, n_tags] nodes, tags [R, W], state)``.
    """
    W = enc.slot_states.shape[0]
    if teacher_tags is not None and teacher_tags.shape[1] != W:
        raise ValueError(f"teacher tags cover {teacher_tags.shape[1]} steps, window has {W}")
    state = decoder.start(enc)
    R = enc.summary.shape[0]
    chosen = np.full((R, W), pad_tag, dtype=np.int64)
    outs = []
    bos = decoder.n_tags
    for k in range(W):
        src = teacher_tags if teacher_tags is not None else chosen
        logp, state = decoder.step(state, previous_tags(src, k, bos), training, rng)
        outs.append(logp)
        chosen[:, k] = np.where(real[:, k], np.argmax(logp.value, axis=1), pad_tag)
    return outs, chosen, state
