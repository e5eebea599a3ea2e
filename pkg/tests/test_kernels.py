import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dactag import kernels
from dactag import numerics as nx
from dactag.encoder import GruCellParams, gru_cell, gru_cell_composed
from dactag.numerics import grad_check, parameter

needs_compiled = pytest.mark.skipif(kernels.compiled is None, reason="compiled kernels not built")


def gru_inputs(rng, T, B, H, masked=True):
    xw = rng.normal(size=(T, B, 3 * H))
    h0 = rng.normal(size=(B, H)) * 0.5
    U = rng.normal(size=(H, 3 * H)) * 0.5
    mask = (rng.random((T, B)) > 0.3).astype(float) if masked else np.ones((T, B))
    keep = (rng.random((T, B)) > 0.3).astype(float) if masked else np.ones((T, B))
    return xw, h0, U, mask, keep


def crf_inputs(rng, B, W, Y):
    unary = rng.normal(size=(B, W, Y))
    trans = rng.normal(size=(Y + 1, Y))
    start = rng.integers(0, W, size=B).astype(np.int64)
    return unary, trans, start


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "numpy")
    assert kernels.reference.NAME == "numpy"


@needs_compiled
@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 4), st.integers(1, 5), st.booleans(), st.integers(0, 10_000))
def test_compiled_gru_matches_reference(T, B, H, reverse, seed):
    rng = np.random.default_rng(seed)
    xw, h0, U, mask, keep = gru_inputs(rng, T, B, H)
    ref = kernels.reference.gru_scan_forward(xw, h0, U, mask, keep, reverse)
    cmp = kernels.compiled.gru_scan_forward(xw, h0, U, mask, keep, reverse)
    for a, b in zip(ref, cmp):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)
    g = rng.normal(size=(T, B, H))
    ref_b = kernels.reference.gru_scan_backward(g, U, mask, keep, reverse, *ref[1:])
    cmp_b = kernels.compiled.gru_scan_backward(g, U, mask, keep, reverse, *cmp[1:])
    for a, b in zip(ref_b, cmp_b):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-13)


@needs_compiled
@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(1, 5), st.integers(0, 10_000))
def test_compiled_crf_matches_reference(B, W, Y, seed):
    rng = np.random.default_rng(seed)
    unary, trans, start = crf_inputs(rng, B, W, Y)
    logz_r, alpha_r = kernels.reference.crf_forward(unary, trans, start)
    logz_c, alpha_c = kernels.compiled.crf_forward(unary, trans, start)
    np.testing.assert_allclose(logz_r, logz_c, rtol=1e-13)
    for a, b in zip(kernels.reference.crf_marginals(unary, trans, start, logz_r, alpha_r),
                    kernels.compiled.crf_marginals(unary, trans, start, logz_c, alpha_c)):
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-13)
    pr, sr = kernels.reference.crf_viterbi(unary, trans, start)
    pc, sc = kernels.compiled.crf_viterbi(unary, trans, start)
    np.testing.assert_array_equal(pr, pc)
    np.testing.assert_allclose(sr, sc, rtol=1e-13)


def test_mask_carries_state_and_keep_resets(rng):
    xw, h0, U, _, _ = gru_inputs(rng, 3, 2, 4, masked=False)
    mask = np.array([[1, 0], [1, 0], [1, 1]], dtype=float)
    keep = np.array([[1, 1], [0, 1], [1, 1]], dtype=float)
    hs = kernels.reference.gru_scan_forward(xw, h0, U, mask, keep, False)[0]
    np.testing.assert_array_equal(hs[0, 1], h0[1])
    np.testing.assert_array_equal(hs[1, 1], h0[1])
    # a reset step equals the same step run from a zero state
    fresh = kernels.reference.gru_scan_forward(xw[1:2, :1], np.zeros((1, 4)), U, np.ones((1, 1)), np.ones((1, 1)), False)[0]
    np.testing.assert_allclose(hs[1, 0], fresh[0, 0], rtol=1e-14)


@pytest.mark.parametrize("reverse", [False, True])
def test_fused_scan_gradients(rng, reverse):
    T, B, d, H = 4, 3, 3, 2
    xs, h0 = parameter(rng.normal(size=(T, B, d))), parameter(rng.normal(size=(B, H)))
    W, U, b = parameter(rng.normal(size=(d, 3 * H))), parameter(rng.normal(size=(H, 3 * H))), parameter(rng.normal(size=(1, 3 * H)))
    mask = np.array([[1, 1, 0], [1, 0, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
    keep = np.array([[1, 1, 1], [0, 1, 1], [1, 1, 0], [1, 1, 1]], dtype=float)
    w = rng.normal(size=(T, B, H))

    def f():
        return nx.sum(nx.mul(nx.gru_scan(xs, h0, W, U, b, mask=mask, keep=keep, reverse=reverse), w))

    assert grad_check(f, [xs, h0, W, U, b]) < 1e-6


def test_fused_cell_matches_composed_route(rng):
    from dactag.encoder import ParamStore
    from dactag.numerics import Rng

    store = ParamStore()
    p = GruCellParams.create(store, "cell", 5, 4, Rng(0))
    p.b.value[...] = rng.normal(size=p.b.shape)
    x, h = parameter(rng.normal(size=(3, 5))), parameter(rng.normal(size=(3, 4)))
    w = rng.normal(size=(3, 4))
    fused = gru_cell(x, h, p)
    composed = gru_cell_composed(x, h, p)
    np.testing.assert_allclose(fused.value, composed.value, rtol=1e-13, atol=1e-15)
    params = [x, h, p.W, p.U, p.b]
    nx.backward(nx.sum(nx.mul(fused, w)))
    g_fused = [q.grad.copy() for q in params]
    for q in params:
        q.zero_grad()
    nx.backward(nx.sum(nx.mul(composed, w)))
    for a, q in zip(g_fused, params):
        np.testing.assert_allclose(a, q.grad, rtol=1e-11, atol=1e-14)


def test_shape_mismatch(rng):
    with pytest.raises(ValueError):
        nx.gru_scan(np.zeros((2, 1, 3)), np.zeros((1, 2)), parameter(np.zeros((4, 6))),
                    parameter(np.zeros((2, 6))), parameter(np.zeros((1, 6))))
