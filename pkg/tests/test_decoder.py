import math

import numpy as np
import pytest

from dactag import numerics as nx
from dactag.decoder import Decoder, DecoderState, Memory, align_score, decode_window
from dactag.encoder import EncoderOutput, ParamStore
from dactag.numerics import Rng, grad_check, parameter


def make_decoder(mode, n_tags=4, d_enc=3, d_dec=5, seed=0):
    store = ParamStore()
    return Decoder(mode, store, n_tags, d_enc, d_dec, 0.0, Rng(seed)), store


def fake_encoding(rng, W=5, R=2, d_enc=3, slots=None):
    slots = parameter(rng.normal(size=(W, R, 2 * d_enc))) if slots is None else slots
    return EncoderOutput(slots, nx.take(slots, slots.shape[0] - 1, axis=0), slots, 0)


def attention_matrix(dec, enc, W):
    real = np.ones((enc.summary.shape[0], W), dtype=bool)
    _, _, state = decode_window(dec, enc, real, dec.n_tags + 1)
    return np.stack(state.attention, axis=1)  # [R, step, slot]


class TestAlignScore:
    def test_zero_v(self, rng):
        W1, W2 = parameter(rng.normal(size=(4, 3))), parameter(rng.normal(size=(4, 3)))
        out = align_score(rng.normal(size=4), rng.normal(size=4), W1, W2, parameter(rng.normal(size=(1, 3))), parameter(np.zeros((3, 1))))
        assert out.value[0] == 0.0

    def test_asymmetric(self, rng):
        W1, W2, b, v = (parameter(rng.normal(size=s)) for s in [(4, 3), (4, 3), (1, 3), (3, 1)])
        x, y = rng.normal(size=4), rng.normal(size=4)
        assert align_score(x, y, W1, W2, b, v).value[0] != align_score(y, x, W1, W2, b, v).value[0]
        assert align_score(x, y, W1, W1, b, v).value[0] == pytest.approx(align_score(y, x, W1, W1, b, v).value[0], abs=1e-15)

    def test_gradient(self, rng):
        W1, W2, b, v = (parameter(rng.normal(size=s)) for s in [(4, 3), (5, 3), (1, 3), (3, 1)])
        h, s = rng.normal(size=4), rng.normal(size=5)
        assert grad_check(lambda: align_score(h, s, W1, W2, b, v), [W1, W2, b, v]) < 1e-6


class TestAttention:
    @pytest.mark.parametrize("mode", ["vanilla", "soft", "hard"])
    def test_rows_on_simplex(self, rng, mode):
        dec, _ = make_decoder(mode)
        A = attention_matrix(dec, fake_encoding(rng), 5)
        assert np.all(A >= 0)
        np.testing.assert_allclose(A.sum(axis=2), 1.0, atol=1e-9)

    def test_hard_is_identity(self, rng):
        dec, _ = make_decoder("hard")
        A = attention_matrix(dec, fake_encoding(rng), 5)
        for r in range(A.shape[0]):
            assert np.array_equal(A[r], np.eye(5))

    @pytest.mark.parametrize("W", [2, 5, 7])
    def test_soft_with_zero_scorer(self, rng, W):
        dec, store = make_decoder("soft")
        store["dec.att.v"].value[...] = 0.0
        A = attention_matrix(dec, fake_encoding(rng, W=W), W)
        e = math.e
        expected = np.full((W, W), 1.0 / (e + W - 1))
        np.fill_diagonal(expected, e / (e + W - 1))
        for r in range(A.shape[0]):
            np.testing.assert_allclose(A[r], expected, atol=1e-12)
        if W == 5:
            assert A[0, 0, 0] == pytest.approx(0.4046097, abs=1e-7)

    def test_vanilla_equal_scores_uniform(self, rng):
        dec, store = make_decoder("vanilla")
        store["dec.att.v"].value[...] = 0.0
        A = attention_matrix(dec, fake_encoding(rng), 5)
        np.testing.assert_allclose(A, 0.2, atol=1e-15)

    def test_hard_context_ignores_other_slots(self, rng):
        dec, _ = make_decoder("hard")
        enc = fake_encoding(rng)
        state = dec.start(enc)
        state = DecoderState(state.hidden, state.memory, step=2)
        _, c1 = dec.attend(state)
        other = enc.slot_states.value.copy()
        other[[0, 1, 3, 4]] = rng.normal(size=other[[0, 1, 3, 4]].shape)
        _, c2 = dec.attend(DecoderState(state.hidden, Memory(nx.constant(other), None), step=2))
        np.testing.assert_array_equal(c1.value, c2.value)
        np.testing.assert_array_equal(c1.value, enc.slot_states.value[2])

    def test_step_beyond_window(self, rng):
        dec, _ = make_decoder("hard")
        state = dec.start(fake_encoding(rng, W=2))
        with pytest.raises(ValueError):
            dec.attend(DecoderState(state.hidden, state.memory, step=2))

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            make_decoder("local")


class TestDecodeWindow:
    def test_init_hidden_zero_bridge(self, rng):
        dec, store = make_decoder("none")
        store["dec.init.W"].value[...] = 0.0
        enc = fake_encoding(rng)
        h = dec.init_hidden(enc.summary)
        assert h.shape == (2, 5) and np.all(h.value == 0.0)

    @pytest.mark.parametrize("mode", ["none", "vanilla", "soft", "hard"])
    def test_log_probs_normalized(self, rng, mode):
        dec, _ = make_decoder(mode)
        real = np.ones((2, 5), dtype=bool)
        log_probs, tags, _ = decode_window(dec, fake_encoding(rng), real, 5)
        assert len(log_probs) == 5
        for lp in log_probs:
            np.testing.assert_allclose(np.exp(lp.value).sum(axis=1), 1.0, atol=1e-9)
        assert tags.shape == (2, 5) and np.all(tags < 4)

    def test_hard_single_slot(self, rng):
        dec, _ = make_decoder("hard")
        enc = fake_encoding(rng, W=1)
        state = dec.start(enc)
        alpha, c = dec.attend(state)
        np.testing.assert_array_equal(alpha, [[1.0], [1.0]])
        np.testing.assert_array_equal(c.value, enc.slot_states.value[0])

    def test_padding_emits_pad(self, rng):
        dec, _ = make_decoder("soft")
        real = np.array([[False, False, True, True, True], [True] * 5])
        _, tags, _ = decode_window(dec, fake_encoding(rng), real, 5)
        assert list(tags[0, :2]) == [5, 5]

    def test_teacher_length_mismatch(self, rng):
        dec, _ = make_decoder("hard")
        with pytest.raises(ValueError):
            decode_window(dec, fake_encoding(rng), np.ones((2, 5), bool), 5, teacher_tags=np.zeros((2, 4), np.int64))

    @pytest.mark.parametrize("mode", ["none", "vanilla", "soft", "hard"])
    def test_window_nll_gradient(self, rng, mode):
        dec, store = make_decoder(mode, d_dec=3)
        for p in store.values():
            if p.name.endswith(".b"):
                p.value[...] = rng.normal(size=p.shape) * 0.3
        slots = parameter(rng.normal(size=(4, 2, 6)))
        gold = np.array([[0, 3, 1, 2], [2, 2, 0, 1]])

        def f():
            enc = fake_encoding(rng, slots=slots)
            log_probs, _, _ = decode_window(dec, enc, np.ones((2, 4), bool), 5, teacher_tags=gold)
            nll = [nx.pick(lp, gold[:, k]) for k, lp in enumerate(log_probs)]
            return nx.scale(nx.sum(nx.concat(nll, axis=0)), -1.0)

        assert grad_check(f, list(store.values()) + [slots]) < 1e-4
