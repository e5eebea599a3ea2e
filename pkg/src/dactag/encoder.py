"""Window encoders: vanilla (mean-of-words), HGRU and PersoHGRU.

All three return per-slot sentence-level states and the summary vector
H = [forward state at the last slot, backward state at the last slot].
Tensors are time-major: slots are axis 0, windows axis 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .corpus import Vocabulary, WindowBatch
from .numerics import Node, Rng

ENCODERS = ("vanilla", "hgru", "perso")


class ParamStore(dict):
    """Ordered name -> parameter node mapping shared by every submodule."""

    def add(self, name: str, value) -> Node:
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        node = nx.parameter(value, name=name)
        self[name] = node
        return node


def uniform_init(rng: Rng, shape, fan: int) -> np.ndarray:
    k = 1.0 / np.sqrt(fan)
    return rng.uniform(-k, k, shape)


@dataclass
class GruCellParams:
    """Packed gate weights, gate order (z, r, n) along the last axis."""

    W: Node  # [d_in, 3H]
    U: Node  # [H, 3H]
    b: Node  # [1, 3H]

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    @classmethod
    def create(cls, store: ParamStore, prefix: str, d_in: int, d_h: int, rng: Rng) -> "GruCellParams":
        # each gate's matrix is drawn separately so k = 1/sqrt(d_h) per matrix
        W = np.concatenate([uniform_init(rng, (d_in, d_h), d_h) for _ in range(3)], axis=1)
        U = np.concatenate([uniform_init(rng, (d_h, d_h), d_h) for _ in range(3)], axis=1)
        return cls(
            store.add(f"{prefix}.W", W),
            store.add(f"{prefix}.U", U),
            store.add(f"{prefix}.b", np.zeros((1, 3 * d_h))),
        )

    @classmethod
    def bind(cls, store: ParamStore, prefix: str) -> "GruCellParams":
        return cls(store[f"{prefix}.W"], store[f"{prefix}.U"], store[f"{prefix}.b"])


def gru_cell(x: Node, h: Node, p: GruCellParams) -> Node:
    """One GRU step on a batch of rows: x [B, d_in], h [B, H] -> [B, H]."""
    x, h = nx.as_node(x), nx.as_node(h)
    if x.value.ndim == 1:
        return nx.reshape(gru_cell(nx.reshape(x, (1, -1)), nx.reshape(h, (1, -1)), p), (p.hidden,))
    if x.shape[1] != p.W.shape[0] or h.shape != (x.shape[0], p.hidden):
        raise ValueError(f"gru_cell: shape mismatch x={x.shape} h={h.shape} W={p.W.shape}")
    out = nx.gru_scan(nx.reshape(x, (1,) + x.shape), h, p.W, p.U, p.b)
    return nx.take(out, 0, axis=0)


def gru_cell_composed(x: Node, h: Node, p: GruCellParams) -> Node:
    """The same step built from primitive ops; a second route for testing the fused kernel."""
    H = p.hidden
    xw = nx.add(nx.matmul(x, p.W), p.b)
    hu = nx.matmul(h, nx.slice_axis(p.U, 0, 2 * H, axis=1))
    z = nx.sigmoid(nx.add(nx.slice_axis(xw, 0, H), nx.slice_axis(hu, 0, H)))
    r = nx.sigmoid(nx.add(nx.slice_axis(xw, H, 2 * H), nx.slice_axis(hu, H, 2 * H)))
    n = nx.tanh(nx.add(nx.slice_axis(xw, 2 * H, 3 * H), nx.matmul(nx.mul(r, h), nx.slice_axis(p.U, 2 * H, 3 * H, axis=1))))
    one_minus_z = nx.sub(np.ones(z.shape), z)
    return nx.add(nx.mul(one_minus_z, n), nx.mul(z, h))


@dataclass
class BiGru:
    fwd: GruCellParams
    bwd: GruCellParams

    @classmethod
    def create(cls, store, prefix, d_in, d_h, rng):
        return cls(
            GruCellParams.create(store, f"{prefix}.fwd", d_in, d_h, rng),
            GruCellParams.create(store, f"{prefix}.bwd", d_in, d_h, rng),
        )

    @classmethod
    def bind(cls, store, prefix):
        return cls(GruCellParams.bind(store, f"{prefix}.fwd"), GruCellParams.bind(store, f"{prefix}.bwd"))

    def run(self, xs: Node, mask=None, keep_fwd=None, keep_bwd=None) -> tuple[Node, Node]:
        _, B, _ = xs.shape
        h0 = np.zeros((B, self.fwd.hidden))
        f = nx.gru_scan(xs, h0, self.fwd.W, self.fwd.U, self.fwd.b, mask=mask, keep=keep_fwd)
        b = nx.gru_scan(xs, h0, self.bwd.W, self.bwd.U, self.bwd.b, mask=mask, keep=keep_bwd, reverse=True)
        return f, b


@dataclass
class EncoderOutput:
    slot_states: Node  # [W, B, 2*d_enc]
    summary: Node  # [B, 2*d_enc]
    utterance_embeddings: Node  # [W, B, d]
    persona_resets: int = 0


def persona_keep_masks(speakers: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Reset masks for the persona layer from per-window speaker codes [B, W].

    Forward state entering slot t survives only if slots t-1 and t share a
    (non-padding) speaker; backward likewise with t+1. Returns time-major
    ``(keep_fwd, keep_bwd, resets)``.
    """
    spk = speakers.T  # [W, B]
    W, B = spk.shape
    same = (spk[1:] == spk[:-1]) & (spk[1:] >= 0)
    keep_f = np.ones((W, B))
    keep_b = np.ones((W, B))
    keep_f[1:] = same
    keep_b[:-1] = same
    resets = int((~same).sum()) * 2
    return keep_f, keep_b, resets


class Encoder:
    def __init__(self, kind: str, store: ParamStore, vocab_size: int, d_emb: int, d_enc: int,
                 dropout: float = 0.0, rng: Rng | None = None, embeddings: np.ndarray | None = None,
                 vanilla_layers: int = 2):
        if kind not in ENCODERS:
            raise ValueError(f"unknown encoder {kind!r}")
        self.kind = kind
        self.store = store
        self.d_enc = d_enc
        self.dropout = dropout
        self.vanilla_layers = vanilla_layers
        if rng is None:  # bind to existing parameters
            self.embed = store["embed"]
            self._bind()
            return
        if embeddings is None:
            embeddings = rng.uniform(-0.1, 0.1, (vocab_size, d_emb))
            embeddings[Vocabulary.PAD] = 0.0
        self.embed = store.add("embed", embeddings)
        if kind == "vanilla":
            d_in = d_emb
            self.layers = []
            for i in range(vanilla_layers):
                self.layers.append(BiGru.create(store, f"enc.sent{i}", d_in, d_enc, rng))
                d_in = 2 * d_enc
        else:
            self.word = BiGru.create(store, "enc.word", d_emb, d_enc, rng)
            if kind == "perso":
                self.persona = BiGru.create(store, "enc.persona", 2 * d_enc, d_enc, rng)
            self.layers = [BiGru.create(store, "enc.sent0", 2 * d_enc, d_enc, rng)]

    def _bind(self):
        s = self.store
        if self.kind == "vanilla":
            self.layers = [BiGru.bind(s, f"enc.sent{i}") for i in range(self.vanilla_layers)]
        else:
            self.word = BiGru.bind(s, "enc.word")
            if self.kind == "perso":
                self.persona = BiGru.bind(s, "enc.persona")
            self.layers = [BiGru.bind(s, "enc.sent0")]

    def utterance_embeddings(self, batch: WindowBatch, training=False, rng: Rng | None = None) -> Node:
        """[W, B, d] embedding of every slot's utterance."""
        W, B, L = batch.tokens.shape
        if self.kind == "vanilla":
            words = nx.embedding_lookup(self.embed, batch.tokens)  # [W, B, L, d]
            words = nx.dropout(words, self.dropout, rng, training)
            within = np.arange(L)[None, None, :] < batch.lengths[:, :, None]
            weights = (within / batch.lengths[:, :, None])[..., None]
            return nx.sum(nx.mul(words, weights), axis=2)
        ids = batch.tokens.transpose(2, 0, 1).reshape(L, W * B)
        words = nx.embedding_lookup(self.embed, ids)  # [L, W*B, d]
        words = nx.dropout(words, self.dropout, rng, training)
        mask = (np.arange(L)[:, None] < batch.lengths.reshape(1, W * B)).astype(np.float64)
        f, b = self.word.run(words, mask=mask)
        # forward carries through padding so its last state is the last real word; backward ends at t=0
        emb = nx.concat([nx.take(f, L - 1, axis=0), nx.take(b, 0, axis=0)], axis=1)
        return nx.reshape(emb, (W, B, 2 * self.d_enc))

    def forward(self, batch: WindowBatch, training=False, rng: Rng | None = None) -> EncoderOutput:
        W = batch.width
        emb = self.utterance_embeddings(batch, training, rng)
        xs = nx.dropout(emb, self.dropout, rng, training)
        resets = 0
        if self.kind == "perso":
            keep_f, keep_b, resets = persona_keep_masks(batch.speakers)
            f, b = self.persona.run(xs, keep_fwd=keep_f, keep_bwd=keep_b)
            xs = nx.dropout(nx.concat([f, b], axis=2), self.dropout, rng, training)
        for i, layer in enumerate(self.layers):
            f, b = layer.run(xs)
            xs = nx.concat([f, b], axis=2)
        summary = nx.concat([nx.take(f, W - 1, axis=0), nx.take(b, W - 1, axis=0)], axis=1)
        return EncoderOutput(xs, summary, emb, resets)


def _encode_as(kind: str, batch, encoder: Encoder, **kw) -> EncoderOutput:
    if encoder.kind != kind:
        raise ValueError(f"encoder is {encoder.kind!r}, not {kind!r}")
    return encoder.forward(batch, **kw)


def encode_vanilla(batch, encoder: Encoder, **kw) -> EncoderOutput:
    return _encode_as("vanilla", batch, encoder, **kw)


def encode_hgru(batch, encoder: Encoder, **kw) -> EncoderOutput:
    return _encode_as("hgru", batch, encoder, **kw)


def encode_perso(batch, encoder: Encoder, **kw) -> EncoderOutput:
    return _encode_as("perso", batch, encoder, **kw)
