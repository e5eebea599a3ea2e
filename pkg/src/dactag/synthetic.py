"""Synthetic conversation generators with known tagging rules."""
from __future__ import annotations

from .corpus import Conversation, Utterance
from .numerics import Rng

FILLERS = ["the", "a", "so", "i", "you", "that", "and", "really", "just", "like", "well", "then"]

GRAMMAR_CUES = {
    "greeting": ["hello", "hi", "hey"],
    "question": ["what", "where", "why"],
    "answer": ["because", "yes", "no"],
    "statement": ["think", "believe", "guess"],
    "backchannel": ["uh-huh", "mm-hmm", "right"],
    "closing": ["bye", "goodbye", "later"],
}


def _pick(rng: Rng, seq):
    return seq[int(rng.integers(len(seq), 1)[0])]


def _utterance(rng: Rng, speaker: str, cue: str, tag: str, max_fill: int = 4) -> Utterance:
    n = int(rng.integers(max_fill + 1, 1)[0])
    words = [_pick(rng, FILLERS) for _ in range(n)]
    pos = int(rng.integers(n + 1, 1)[0])
    words.insert(pos, cue)
    return Utterance(speaker, words, tag)


def grammar_corpus(n: int, seed: int = 0) -> list[Conversation]:
    """Six-tag deterministic grammar with lexical cues.

    greeting greeting, then 1-4 blocks of (question answer) or
    (statement backchannel), then closing closing; speakers alternate.
    """
    rng = Rng(seed)
    out = []
    for i in range(n):
        tags = ["greeting", "greeting"]
        for _ in range(1 + int(rng.integers(4, 1)[0])):
            tags += ["question", "answer"] if rng.random() < 0.5 else ["statement", "backchannel"]
        tags += ["closing", "closing"]
        utts = [
            _utterance(rng, "AB"[k % 2], _pick(rng, GRAMMAR_CUES[t]), t)
            for k, t in enumerate(tags)
        ]
        out.append(Conversation(f"g{i:04d}", utts))
    return out


AMBIGUOUS = ["it", "can", "be", "a", "pain"]
DEPENDENCY_CUES = {
    "oq": ["what", "do", "you", "think", "about", "it"],
    "iq": ["where", "did", "you", "buy", "it"],
    "ack": ["okay"],
    "hold": ["well", "um"],
}
# the ambiguous utterance's tag is decided by the question three slots back
RESOLVE = {"oq": "sv", "iq": "sd"}


def dependency_corpus(n: int, seed: int = 0, blocks: tuple[int, int] = (1, 4)) -> list[Conversation]:
    """Corpus where an utterance's tag depends on the tag three slots earlier.

    Each block is (question, ack, hold, "it can be a pain"); the last
    utterance is tagged ``sv`` after an opinion question (``oq``) and ``sd``
    after an information question (``iq``). Its words never change.
    """
    rng = Rng(seed)
    lo, hi = blocks
    out = []
    for i in range(n):
        utts = []
        for _ in range(lo + int(rng.integers(hi - lo + 1, 1)[0])):
            q = "oq" if rng.random() < 0.5 else "iq"
            utts.append(Utterance("A", list(DEPENDENCY_CUES[q]), q))
            utts.append(Utterance("B", list(DEPENDENCY_CUES["ack"]), "ack"))
            utts.append(Utterance("B", list(DEPENDENCY_CUES["hold"]), "hold"))
            utts.append(Utterance("B", list(AMBIGUOUS), RESOLVE[q]))
        out.append(Conversation(f"d{i:04d}", utts))
    return out


def split(conversations: list[Conversation], dev_fraction: float = 0.2):
    k = int(round(len(conversations) * (1.0 - dev_fraction)))
    return conversations[:k], conversations[k:]
