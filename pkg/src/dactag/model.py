"""Tagger assemblies: encoder + tag decoder (seq2seq) or encoder + CRF."""
from __future__ import annotations

import numpy as np

from . import numerics as nx
from .corpus import TagSet, Vocabulary, WindowBatch
from .crf import CrfLayer, CrfParams
from .decoder import Decoder, decode_window
from .encoder import Encoder, EncoderOutput, ParamStore
from .harness.config import Config
from .numerics import Node, Rng


def token_nll(log_probs, gold: np.ndarray, mask: np.ndarray) -> Node:
    """Mean of -log P(gold) over positions where ``mask`` is set.

    log_probs: W nodes of shape [B, Y] (or one [B, W, Y] node); gold, mask: [B, W].
    """
    mask = np.asarray(mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("token_nll: every position is padding")
    stacked = log_probs if isinstance(log_probs, Node) else nx.stack(list(log_probs), axis=1)
    B, W, Y = stacked.shape
    safe = np.where(mask, gold, 0).reshape(-1)
    picked = nx.pick(nx.reshape(stacked, (B * W, Y)), safe)
    return nx.scale(nx.sum(nx.mul(picked, mask.reshape(-1).astype(np.float64))), -1.0 / count)


def select_encoding(enc: EncoderOutput, rows) -> EncoderOutput:
    rows = np.asarray(rows, dtype=np.int64)
    return EncoderOutput(
        nx.index_select(enc.slot_states, rows, axis=1),
        nx.index_select(enc.summary, rows, axis=0),
        nx.index_select(enc.utterance_embeddings, rows, axis=1),
        enc.persona_resets,
    )


class Tagger:
    kind = "base"

    def __init__(self, config: Config, vocab: Vocabulary, tagset: TagSet, params: ParamStore):
        self.config = config
        self.vocab = vocab
        self.tagset = tagset
        self.params = params

    @property
    def n_tags(self) -> int:
        return len(self.tagset)

    def encode(self, batch: WindowBatch, training=False, rng: Rng | None = None) -> EncoderOutput:
        return self.encoder.forward(batch, training, rng)

    def parameters(self) -> list[Node]:
        return list(self.params.values())


class Seq2SeqTagger(Tagger):
    kind = "seq2seq"

    def __init__(self, config, vocab, tagset, params=None, rng: Rng | None = None, embeddings=None):
        fresh = params is None
        super().__init__(config, vocab, tagset, ParamStore() if fresh else params)
        init = rng if fresh else None
        self.encoder = Encoder(config.encoder, self.params, len(vocab), config.d_emb, config.d_enc,
                               config.dropout, init, embeddings, config.vanilla_layers)
        self.decoder = Decoder(config.attention, self.params, len(tagset), config.d_enc, config.d_dec,
                               config.dropout, init)

    def decode(self, batch: WindowBatch, teacher_tags=None, training=False, rng=None, enc=None):
        enc = enc if enc is not None else self.encode(batch, training, rng)
        return decode_window(self.decoder, enc, batch.real, self.tagset.pad, teacher_tags, training, rng)

    def loss(self, batch: WindowBatch, training=False, rng: Rng | None = None) -> Node:
        log_probs, _, _ = self.decode(batch, batch.tags, training, rng)
        return token_nll(log_probs, batch.tags, batch.labeled)

    def greedy(self, batch: WindowBatch) -> np.ndarray:
        with nx.no_grad():
            _, tags, _ = self.decode(batch)
        return tags

    def sequence_logp(self, batch: WindowBatch, sequences: np.ndarray, rows=None,
                      training=False, rng: Rng | None = None, enc=None) -> Node:
        """log P(sequence | window) summed over real slots; sequences [R, W], rows[r] = window index."""
        enc = enc if enc is not None else self.encode(batch, training, rng)
        rows = np.arange(batch.size) if rows is None else np.asarray(rows, dtype=np.int64)
        enc_r = select_encoding(enc, rows)
        real = batch.real[rows]
        seqs = np.where(real, sequences, self.tagset.pad)
        log_probs, _, _ = decode_window(self.decoder, enc_r, real, self.tagset.pad, seqs, training, rng)
        stacked = nx.stack(log_probs, axis=1)
        R, W, Y = stacked.shape
        picked = nx.pick(nx.reshape(stacked, (R * W, Y)), np.where(real, seqs, 0).reshape(-1))
        picked = nx.mul(nx.reshape(picked, (R, W)), real.astype(np.float64))
        return nx.sum(picked, axis=1)

    def predict(self, batch: WindowBatch, beam: int = 1) -> np.ndarray:
        """Best tag sequence per window [B, W]; padding slots hold the PAD tag."""
        if beam <= 1:
            return self.greedy(batch)
        from .beam import beam_search

        return np.stack([hyps[0].tags for hyps in beam_search(self, batch, beam, self.config.alpha_lp)])


class CrfTagger(Tagger):
    kind = "crf"

    def __init__(self, config, vocab, tagset, params=None, rng: Rng | None = None, embeddings=None):
        fresh = params is None
        super().__init__(config, vocab, tagset, ParamStore() if fresh else params)
        init = rng if fresh else None
        self.encoder = Encoder(config.encoder, self.params, len(vocab), config.d_emb, config.d_enc,
                               config.dropout, init, embeddings, config.vanilla_layers)
        crf = CrfParams.create(self.params, 2 * config.d_enc, len(tagset), rng) if fresh else CrfParams.bind(self.params)
        self.crf = CrfLayer(crf)

    def loss(self, batch: WindowBatch, training=False, rng: Rng | None = None) -> Node:
        if not batch.labeled[batch.real].all():
            raise ValueError("CRF training needs gold tags on every real slot")
        enc = self.encode(batch, training, rng)
        return self.crf.nll(enc, batch.tags, batch.n_pad)

    def predict(self, batch: WindowBatch, beam: int = 1) -> np.ndarray:
        with nx.no_grad():
            enc = self.encode(batch)
            paths = self.crf.decode(enc, batch.n_pad)
        return np.where(paths < 0, self.tagset.pad, paths)


def build_model(config: Config, vocab: Vocabulary, tagset: TagSet, rng: Rng | None = None,
                params: ParamStore | None = None, embeddings=None) -> Tagger:
    cls = Seq2SeqTagger if config.model == "seq2seq" else CrfTagger
    if params is None and rng is None:
        rng = Rng(config.seed)
    return cls(config, vocab, tagset, params=params, rng=rng, embeddings=embeddings)
