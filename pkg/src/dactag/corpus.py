"""Conversations, vocabularies, tag sets, context windows and batching."""
from __future__ import annotations

import json
import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError
from .numerics import Rng

UNK_TOKEN = "<unk>"
PAD_TOKEN = "<pad>"
BOS_TAG = "<bos>"
PAD_TAG = "<pad>"


@dataclass
class Utterance:
    speaker: str
    tokens: list[str]
    tag: str | None = None

    def __post_init__(self):
        if not self.speaker:
            raise DataError("utterance has an empty speaker")
        if not self.tokens:
            raise DataError("utterance has no tokens")


@dataclass
class Conversation:
    id: str
    utterances: list[Utterance]

    def __post_init__(self):
        if not self.utterances:
            raise DataError(f"conversation {self.id!r} has no utterances")

    def __len__(self) -> int:
        return len(self.utterances)


class TagSet:
    """Real tags get indices 0..n-1; BOS is n and PAD is n+1."""

    def __init__(self, tags: Iterable[str]):
        self.tags = list(tags)
        if len(set(self.tags)) != len(self.tags):
            raise ValueError("duplicate tags")
        if BOS_TAG in self.tags or PAD_TAG in self.tags:
            raise ValueError("reserved tag name in tag set")
        self.index = {t: i for i, t in enumerate(self.tags)}
        self.bos = len(self.tags)
        self.pad = len(self.tags) + 1

    @classmethod
    def from_conversations(cls, conversations: Iterable[Conversation]) -> "TagSet":
        found = {u.tag for c in conversations for u in c.utterances if u.tag is not None}
        return cls(sorted(found))

    def __len__(self) -> int:
        return len(self.tags)

    def __eq__(self, other) -> bool:
        return isinstance(other, TagSet) and self.tags == other.tags

    def encode(self, tag: str) -> int:
        try:
            return self.index[tag]
        except KeyError:
            raise DataError(f"unknown tag {tag!r}") from None

    def decode(self, i: int) -> str:
        if i == self.bos:
            return BOS_TAG
        if i == self.pad:
            return PAD_TAG
        return self.tags[i]


class Vocabulary:
    UNK = 0
    PAD = 1

    def __init__(self, words: Sequence[str], min_count: int = 1):
        self.words = [UNK_TOKEN, PAD_TOKEN, *words]
        self.index = {w: i for i, w in enumerate(self.words)}
        self.min_count = min_count

    def __len__(self) -> int:
        return len(self.words)

    def encode(self, word: str) -> int:
        return self.index.get(word, self.UNK)

    def decode(self, i: int) -> str:
        return self.words[i]


def build_vocab(conversations: Iterable[Conversation], min_count: int = 1) -> Vocabulary:
    """Words seen at least ``min_count`` times, by frequency then alphabetically."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(w for c in conversations for u in c.utterances for w in u.tokens)
    kept = sorted((w for w, n in counts.items() if n >= min_count), key=lambda w: (-counts[w], w))
    return Vocabulary(kept, min_count)


def tokenize(text: str) -> list[str]:
    out = []
    for piece in text.lower().split():
        piece = piece.strip(string.punctuation)
        if piece:
            out.append(piece)
    return out


def _parse_record(obj, where: str, max_seq_len: int | None, tagset: TagSet | None) -> Conversation:
    if not isinstance(obj, dict) or "utterances" not in obj:
        raise DataError(f"{where}: expected an object with 'conversation_id' and 'utterances'")
    cid = str(obj.get("conversation_id", ""))
    if not cid:
        raise DataError(f"{where}: missing conversation_id")
    utts = []
    for k, u in enumerate(obj["utterances"]):
        loc = f"{where}: conversation {cid!r} utterance {k}"
        if not isinstance(u, dict):
            raise DataError(f"{loc}: expected an object")
        speaker = u.get("speaker")
        if not isinstance(speaker, str) or not speaker:
            raise DataError(f"{loc}: missing speaker")
        if u.get("tokens") is not None:
            toks = u["tokens"]
            if not isinstance(toks, list) or not all(isinstance(t, str) for t in toks):
                raise DataError(f"{loc}: 'tokens' must be a list of strings")
            tokens = [t.lower() for t in toks if t.strip()]
        elif u.get("text") is not None:
            tokens = tokenize(str(u["text"]))
        else:
            raise DataError(f"{loc}: needs 'tokens' or 'text'")
        if not tokens:
            raise DataError(f"{loc}: no tokens after tokenization")
        if max_seq_len is not None:
            tokens = tokens[:max_seq_len]
        tag = u.get("tag")
        if tag is not None:
            tag = str(tag)
            if tagset is not None and tag not in tagset.index:
                raise DataError(f"{loc}: unknown tag {tag!r}")
        utts.append(Utterance(speaker, tokens, tag))
    if not utts:
        raise DataError(f"{where}: conversation {cid!r} has no utterances")
    return Conversation(cid, utts)


def load_corpus(path, max_seq_len: int | None = None, tagset: TagSet | None = None,
                format: str = "jsonl") -> list[Conversation]:
    """Read one conversation per line. With ``tagset``, tags outside it are errors."""
    if format != "jsonl":
        raise DataError(f"unsupported corpus format {format!r}")
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    out = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON ({exc.msg})") from None
            out.append(_parse_record(obj, where, max_seq_len, tagset))
    return out


def load_split_manifest(path, manifest, max_seq_len: int | None = None) -> dict[str, list[Conversation]]:
    """Split one corpus file by a JSON manifest ``{"train": [ids], "dev": [...], ...}``."""
    convs = {c.id: c for c in load_corpus(path, max_seq_len)}
    try:
        spec = json.loads(Path(manifest).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{manifest}: cannot read split manifest ({exc})") from None
    splits = {}
    for name, ids in spec.items():
        missing = [i for i in ids if i not in convs]
        if missing:
            raise DataError(f"{manifest}: split {name!r} names unknown conversation {missing[0]!r}")
        splits[name] = [convs[i] for i in ids]
    return splits


def save_corpus(conversations: Iterable[Conversation], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for c in conversations:
            rec = {
                "conversation_id": c.id,
                "utterances": [{"speaker": u.speaker, "tokens": u.tokens, "tag": u.tag} for u in c.utterances],
            }
            fh.write(json.dumps(rec) + "\n")


@dataclass
class ContextWindow:
    """W consecutive slots ending at the target utterance; padding is a prefix of ``None``s."""

    conversation_id: str
    position: int
    utterances: list[Utterance | None]
    n_pad: int = field(default=0)

    @property
    def size(self) -> int:
        return len(self.utterances)

    @property
    def target_index(self) -> int:
        return len(self.utterances) - 1

    @property
    def target(self) -> Utterance:
        return self.utterances[-1]

    @property
    def tags(self) -> list[str | None]:
        return [None if u is None else u.tag for u in self.utterances]

    @property
    def speakers(self) -> list[str | None]:
        return [None if u is None else u.speaker for u in self.utterances]


def make_windows(conversation: Conversation, W: int) -> list[ContextWindow]:
    if W < 1:
        raise ValueError("window size must be >= 1")
    utts = conversation.utterances
    out = []
    for k in range(len(utts)):
        lo = max(0, k - W + 1)
        real = list(utts[lo : k + 1])
        n_pad = W - len(real)
        out.append(ContextWindow(conversation.id, k, [None] * n_pad + real, n_pad))
    return out


def windows_for(conversations: Iterable[Conversation], W: int) -> list[ContextWindow]:
    return [w for c in conversations for w in make_windows(c, W)]


def load_embeddings(path, vocab: Vocabulary, dim: int, rng: Rng) -> np.ndarray:
    """Pretrained text-format vectors; uncovered rows ~ U(-0.1, 0.1), PAD row zero."""
    table = rng.uniform(-0.1, 0.1, (len(vocab), dim))
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            word, vals = parts[0], parts[1:]
            if len(vals) != dim:
                raise DataError(f"{path}:{lineno}: vector for {word!r} has {len(vals)} values, expected {dim}")
            idx = vocab.index.get(word)
            if idx is None or idx in (Vocabulary.UNK, Vocabulary.PAD):
                continue
            try:
                table[idx] = [float(v) for v in vals]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value in vector for {word!r}") from None
    table[Vocabulary.PAD] = 0.0
    return table


@dataclass
class WindowBatch:
    """Index arrays for B windows of W slots.

    tokens:  [W, B, L] word ids, PAD beyond each utterance's length
    lengths: [W, B]
    tags:    [B, W] gold tag ids; PAD where the slot is padding or unlabeled
    real:    [B, W] True on non-padding slots
    speakers:[B, W] per-window speaker codes, -1 on padding
    """

    windows: list[ContextWindow]
    tokens: np.ndarray
    lengths: np.ndarray
    tags: np.ndarray
    real: np.ndarray
    speakers: np.ndarray
    pad_tag: int = 0

    @property
    def size(self) -> int:
        return len(self.windows)

    @property
    def width(self) -> int:
        return self.tokens.shape[0]

    @property
    def n_pad(self) -> np.ndarray:
        return (~self.real).sum(axis=1)

    @property
    def labeled(self) -> np.ndarray:
        return self.real & (self.tags >= 0) & (self.tags < self.pad_tag)


def encode_batch(windows: Sequence[ContextWindow], vocab: Vocabulary, tagset: TagSet) -> WindowBatch:
    if not windows:
        raise ValueError("cannot batch zero windows")
    B = len(windows)
    W = windows[0].size
    L = max(len(u.tokens) for w in windows for u in w.utterances if u is not None)
    tokens = np.full((W, B, L), Vocabulary.PAD, dtype=np.int64)
    lengths = np.ones((W, B), dtype=np.int64)
    tags = np.full((B, W), tagset.pad, dtype=np.int64)
    real = np.zeros((B, W), dtype=bool)
    speakers = np.full((B, W), -1, dtype=np.int64)
    for b, w in enumerate(windows):
        if w.size != W:
            raise ValueError("all windows in a batch must have the same size")
        codes: dict[str, int] = {}
        for j, u in enumerate(w.utterances):
            if u is None:
                continue
            real[b, j] = True
            ids = [vocab.encode(t) for t in u.tokens]
            tokens[j, b, : len(ids)] = ids
            lengths[j, b] = len(ids)
            speakers[b, j] = codes.setdefault(u.speaker, len(codes))
            if u.tag is not None:
                tags[b, j] = tagset.encode(u.tag)
    return WindowBatch(list(windows), tokens, lengths, tags, real, speakers, pad_tag=tagset.pad)
