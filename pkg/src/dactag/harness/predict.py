"""Per-utterance prediction from a checkpoint, with optional attention grids."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..beam import beam_search
from ..corpus import Conversation, TagSet, encode_batch, make_windows
from ..errors import DataError, UsageError
from ..model import Seq2SeqTagger
from ..training import EVAL_BATCH, batches
from .metrics import matrix_csv


@dataclass
class Prediction:
    conversation_id: str
    position: int
    speaker: str
    predicted: str
    gold: str | None


def check_tagset(tagset: TagSet, conversations: Sequence[Conversation]) -> None:
    seen = sorted({u.tag for c in conversations for u in c.utterances if u.tag is not None})
    unknown = [t for t in seen if t not in tagset.index]
    if unknown:
        raise DataError(f"tag-set mismatch: corpus tags not in checkpoint: {', '.join(unknown)}")


def attention_csv(grid: np.ndarray) -> str:
    """Rows are decoder steps, columns are window slots."""
    W = grid.shape[1]
    return matrix_csv(grid, [str(k) for k in range(grid.shape[0])], [str(j) for j in range(W)], corner="step\\slot")


def predict(model, conversations: Sequence[Conversation], beam: int = 1,
            attention_dir=None) -> list[Prediction]:
    """One prediction per utterance: the last-position tag of its window.

    With ``attention_dir``, writes ``<conversation>_<position>.csv`` holding
    the best hypothesis's [step, slot] attention weights for every window.
    """
    check_tagset(model.tagset, conversations)
    W = model.config.context_window
    windows = [w for c in conversations for w in make_windows(c, W)]
    export = attention_dir is not None
    if export:
        if not isinstance(model, Seq2SeqTagger) or model.config.attention == "none":
            raise UsageError("attention export needs a seq2seq checkpoint with attention")
        attention_dir = Path(attention_dir)
        attention_dir.mkdir(parents=True, exist_ok=True)
    out = []
    for chunk in batches(windows, EVAL_BATCH):
        batch = encode_batch(chunk, model.vocab, model.tagset)
        if export:
            hyps = beam_search(model, batch, beam, model.config.alpha_lp)
            seqs = np.stack([h[0].tags for h in hyps])
            for w, h in zip(chunk, hyps):
                name = f"{w.conversation_id}_{w.position:05d}.csv"
                (attention_dir / name).write_text(attention_csv(h[0].attention), encoding="utf-8")
        else:
            seqs = model.predict(batch, beam)
        for w, seq in zip(chunk, seqs):
            t = w.target
            out.append(Prediction(w.conversation_id, w.position, t.speaker, model.tagset.decode(int(seq[-1])), t.tag))
    return out


def predictions_tsv(preds: Sequence[Prediction]) -> str:
    lines = ["conversation_id\tposition\tspeaker\tpredicted\tgold"]
    lines += [f"{p.conversation_id}\t{p.position}\t{p.speaker}\t{p.predicted}\t{p.gold or ''}" for p in preds]
    return "\n".join(lines) + "\n"
