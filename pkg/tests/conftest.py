import numpy as np
import pytest

from dactag.corpus import Conversation, TagSet, Utterance, build_vocab, encode_batch, windows_for
from dactag.harness.config import Config
from dactag.model import build_model
from dactag.numerics import Rng

WORDS = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "eta", "theta"]


def random_conversations(n, n_tags, seed=0, lengths=(1, 8), speakers="AB"):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        utts = []
        for _ in range(int(rng.integers(lengths[0], lengths[1] + 1))):
            words = [WORDS[j] for j in rng.integers(0, len(WORDS), int(rng.integers(1, 5)))]
            utts.append(Utterance(speakers[int(rng.integers(len(speakers)))], words, f"t{int(rng.integers(n_tags))}"))
        out.append(Conversation(f"c{i}", utts))
    return out


def toy_model(n_tags=4, W=5, d=8, seed=0, **overrides):
    """A small model plus one batch covering padded and unpadded windows."""
    convs = random_conversations(3, n_tags, seed, lengths=(2, 7))
    tagset = TagSet([f"t{i}" for i in range(n_tags)])
    vocab = build_vocab(convs)
    cfg = Config(context_window=W, d_emb=6, d_enc=d, d_dec=d, dropout=0.0, seed=seed).replace(**overrides)
    model = build_model(cfg, vocab, tagset, rng=Rng(seed))
    windows = windows_for(convs, W)
    return model, encode_batch(windows, vocab, tagset)


@pytest.fixture
def make_toy():
    return toy_model


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for the end-of-run acceptance summary."""

    def record(number, ok, detail):
        request.config.acceptance_lines.append((number, f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda x: x[0]):
            terminalreporter.write_line(line)
