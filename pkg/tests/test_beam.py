import itertools

import numpy as np
import pytest

from conftest import toy_model
from dactag.beam import beam_search, candidate_set, length_penalty


def exhaustive(model, batch, alpha_lp=0.65):
    """Best (sequence, score) per window by scoring every tag sequence."""
    Y, W, pad = model.n_tags, batch.width, model.tagset.pad
    out = []
    for n in range(batch.size):
        real = np.flatnonzero(batch.real[n])
        seqs = []
        for combo in itertools.product(range(Y), repeat=len(real)):
            s = np.full(W, pad)
            s[real] = combo
            seqs.append(s)
        seqs = np.array(seqs)
        logp = model.sequence_logp(batch, seqs, rows=np.full(len(seqs), n)).value
        scores = logp / length_penalty(W, alpha_lp)
        best = np.lexsort([*(seqs[:, j] for j in range(W - 1, -1, -1)), -scores])[0]
        out.append((seqs[best], scores[best]))
    return out


class TestLengthPenalty:
    def test_values(self):
        assert length_penalty(7, 0.0) == 1.0
        assert length_penalty(1, 0.37) == 1.0
        assert length_penalty(7, 1.0) == 2.0
        assert length_penalty(0, 1.0) == pytest.approx(5 / 6)

    def test_invalid(self):
        with pytest.raises(ValueError):
            length_penalty(-1, 1.0)
        with pytest.raises(ValueError):
            length_penalty(3, -0.1)


@pytest.mark.parametrize("attention", ["none", "vanilla", "soft", "hard"])
def test_full_beam_is_exhaustive(attention):
    model, batch = toy_model(n_tags=3, W=4, seed=3, attention=attention, encoder="vanilla")
    hyps = beam_search(model, batch, 81)
    for (seq, score), h in zip(exhaustive(model, batch), hyps):
        np.testing.assert_array_equal(h[0].tags, seq)
        assert abs(h[0].score - score) <= 1e-12


def test_beam_one_is_greedy():
    for seed in range(4):
        model, batch = toy_model(n_tags=5, seed=seed, encoder="perso", attention="soft")
        greedy = model.greedy(batch)
        beam = np.stack([h[0].tags for h in beam_search(model, batch, 1)])
        np.testing.assert_array_equal(beam, greedy)


def test_hypothesis_invariants():
    model, batch = toy_model(n_tags=3, W=4, seed=1)
    for hyps in beam_search(model, batch, 5, alpha_lp=0.65):
        seqs = [tuple(h.tags) for h in hyps]
        assert len(set(seqs)) == len(seqs)
        for h in hyps:
            assert h.logp <= 0
            assert h.score == h.logp / length_penalty(4, 0.65)
        keys = [(-h.score, -h.logp, tuple(h.tags)) for h in hyps]
        assert keys == sorted(keys)


def test_alpha_does_not_change_ranking():
    model, batch = toy_model(n_tags=3, W=4, seed=2)
    a = beam_search(model, batch, 4, alpha_lp=0.0)
    b = beam_search(model, batch, 4, alpha_lp=0.65)
    for ha, hb in zip(a, b):
        assert [tuple(h.tags) for h in ha] == [tuple(h.tags) for h in hb]


def test_padding_never_branches():
    model, batch = toy_model(n_tags=3, W=4, seed=4)
    for n, hyps in enumerate(beam_search(model, batch, 81)):
        n_real = int(batch.real[n].sum())
        assert len(hyps) == 3 ** n_real
        for h in hyps:
            assert np.all(h.tags[~batch.real[n]] == model.tagset.pad)


def test_candidate_set():
    model, batch = toy_model(n_tags=3, W=4, seed=5)
    singles = candidate_set(model, batch, 1)
    assert all(len(c) == 1 for c in singles)
    for cands in candidate_set(model, batch, 6):
        assert sum(p for _, p in cands) <= 1 + 1e-12
        assert len({tuple(s) for s, _ in cands}) == len(cands)


def test_deterministic():
    model, batch = toy_model(n_tags=3, seed=6)
    a = beam_search(model, batch, 3)
    b = beam_search(model, batch, 3)
    assert [[(tuple(h.tags), h.score) for h in x] for x in a] == [[(tuple(h.tags), h.score) for h in x] for x in b]


def test_best_score_non_decreasing_in_beam_size():
    model, batch = toy_model(n_tags=3, W=4, seed=7, encoder="perso", attention="vanilla")
    best = np.array([[h[0].score for h in beam_search(model, batch, B)] for B in (1, 2, 3, 5, 9, 27, 81)])
    assert np.all(np.diff(best, axis=0) >= -1e-15)


def test_invalid_beam():
    model, batch = toy_model()
    with pytest.raises(ValueError):
        beam_search(model, batch, 0)
