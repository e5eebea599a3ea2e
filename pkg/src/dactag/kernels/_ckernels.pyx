# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_reference.py``.

Same signatures, same results to rounding. Recurrent matmuls go straight to
BLAS dgemm; everything elementwise is a fused C loop.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "cython"


cdef inline double _sig(double x) nogil:
    cdef double e
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef void _gemm(char ta, char tb, int m, int n, int k,
                double *A, int lda, double *B, int ldb,
                double beta, double *C, int ldc) noexcept nogil:
    # row-major C[m, n] = op(A) @ op(B) + beta * C, via column-major dgemm on the transposes
    cdef double one = 1.0
    dgemm(&tb, &ta, &n, &m, &k, &one, B, &ldb, A, &lda, &beta, C, &ldc)


def gru_scan_forward(double[:, :, ::1] xw, double[:, ::1] h0, double[:, ::1] U,
                     double[:, ::1] mask, double[:, ::1] keep, bint reverse):
    cdef int T = xw.shape[0], B = xw.shape[1], H3 = xw.shape[2]
    cdef int H = H3 // 3, H2 = 2 * H
    hs_a = np.empty((T, B, H))
    z_a = np.empty((T, B, H))
    r_a = np.empty((T, B, H))
    n_a = np.empty((T, B, H))
    hp_a = np.empty((T, B, H))
    h_a = np.array(h0, copy=True)
    gzr_a = np.empty((B, H2))
    rh_a = np.empty((B, H))
    gn_a = np.empty((B, H))
    cdef double[:, :, ::1] hs = hs_a, z = z_a, r = r_a, n = n_a, hp = hp_a
    cdef double[:, ::1] h = h_a, gzr = gzr_a, rh = rh_a, gn = gn_a
    cdef int step, t, b, j
    cdef double zz, rr, nn, m, kp, hn
    with nogil:
        for step in range(T):
            t = T - 1 - step if reverse else step
            for b in range(B):
                kp = keep[t, b]
                for j in range(H):
                    hp[t, b, j] = kp * h[b, j]
            _gemm(b'N', b'N', B, H2, H, &hp[t, 0, 0], H, &U[0, 0], H3, 0.0, &gzr[0, 0], H2)
            for b in range(B):
                for j in range(H):
                    zz = _sig(xw[t, b, j] + gzr[b, j])
                    rr = _sig(xw[t, b, H + j] + gzr[b, H + j])
                    z[t, b, j] = zz
                    r[t, b, j] = rr
                    rh[b, j] = rr * hp[t, b, j]
            _gemm(b'N', b'N', B, H, H, &rh[0, 0], H, &U[0, H2], H3, 0.0, &gn[0, 0], H)
            for b in range(B):
                m = mask[t, b]
                for j in range(H):
                    nn = tanh(xw[t, b, H2 + j] + gn[b, j])
                    n[t, b, j] = nn
                    zz = z[t, b, j]
                    hn = (1.0 - zz) * nn + zz * hp[t, b, j]
                    h[b, j] = m * hn + (1.0 - m) * h[b, j]
                    hs[t, b, j] = h[b, j]
    return hs_a, z_a, r_a, n_a, hp_a


def gru_scan_backward(double[:, :, ::1] dhs, double[:, ::1] U, double[:, ::1] mask,
                      double[:, ::1] keep, bint reverse, double[:, :, ::1] z,
                      double[:, :, ::1] r, double[:, :, ::1] n, double[:, :, ::1] hp):
    cdef int T = dhs.shape[0], B = dhs.shape[1], H = dhs.shape[2]
    cdef int H2 = 2 * H, H3 = 3 * H
    dxw_a = np.empty((T, B, H3))
    dU_a = np.zeros((H, H3))
    dh_a = np.zeros((B, H))
    dhp_a = np.empty((B, H))
    drh_a = np.empty((B, H))
    rh_a = np.empty((B, H))
    cdef double[:, :, ::1] dxw = dxw_a
    cdef double[:, ::1] dU = dU_a, dh = dh_a, dhp = dhp_a, drh = drh_a, rh = rh_a
    cdef int step, t, b, j
    cdef double m, d, dhn, zz, rr, nn, dz, dn, dr
    with nogil:
        for step in range(T):
            t = step if reverse else T - 1 - step
            for b in range(B):
                m = mask[t, b]
                for j in range(H):
                    d = dh[b, j] + dhs[t, b, j]
                    dhn = m * d
                    dh[b, j] = (1.0 - m) * d
                    zz = z[t, b, j]
                    nn = n[t, b, j]
                    dz = dhn * (hp[t, b, j] - nn)
                    dn = dhn * (1.0 - zz)
                    dhp[b, j] = dhn * zz
                    dxw[t, b, H2 + j] = dn * (1.0 - nn * nn)
                    dxw[t, b, j] = dz * zz * (1.0 - zz)
                    rh[b, j] = r[t, b, j] * hp[t, b, j]
            # dU_n += rh^T @ dan
            _gemm(b'T', b'N', H, H, B, &rh[0, 0], H, &dxw[t, 0, H2], H3, 1.0, &dU[0, H2], H3)
            # drh = dan @ U_n^T
            _gemm(b'N', b'T', B, H, H, &dxw[t, 0, H2], H3, &U[0, H2], H3, 0.0, &drh[0, 0], H)
            for b in range(B):
                for j in range(H):
                    rr = r[t, b, j]
                    dr = drh[b, j] * hp[t, b, j]
                    dhp[b, j] += drh[b, j] * rr
                    dxw[t, b, H + j] = dr * rr * (1.0 - rr)
            # dU_zr += hp^T @ [da_z, da_r];  dhp += [da_z, da_r] @ U_zr^T
            _gemm(b'T', b'N', H, H2, B, &hp[t, 0, 0], H, &dxw[t, 0, 0], H3, 1.0, &dU[0, 0], H3)
            _gemm(b'N', b'T', B, H, H2, &dxw[t, 0, 0], H3, &U[0, 0], H3, 1.0, &dhp[0, 0], H)
            for b in range(B):
                for j in range(H):
                    dh[b, j] += keep[t, b] * dhp[b, j]
    return dxw_a, dU_a, dh_a


cdef inline double _lse(double *v, int n, int stride) noexcept nogil:
    cdef double mx = v[0], s = 0.0
    cdef int i
    for i in range(1, n):
        if v[i * stride] > mx:
            mx = v[i * stride]
    for i in range(n):
        s += exp(v[i * stride] - mx)
    return mx + log(s)


def crf_forward(double[:, :, ::1] unary, double[:, ::1] trans, cnp.int64_t[::1] start):
    cdef int B = unary.shape[0], W = unary.shape[1], Y = unary.shape[2]
    alpha_a = np.zeros((B, W, Y))
    logz_a = np.empty(B)
    tmp_a = np.empty(Y)
    cdef double[:, :, ::1] alpha = alpha_a
    cdef double[::1] logz = logz_a, tmp = tmp_a
    cdef int b, s, t, i, j
    with nogil:
        for b in range(B):
            s = <int>start[b]
            for j in range(Y):
                alpha[b, s, j] = trans[Y, j] + unary[b, s, j]
            for t in range(s + 1, W):
                for j in range(Y):
                    for i in range(Y):
                        tmp[i] = alpha[b, t - 1, i] + trans[i, j]
                    alpha[b, t, j] = _lse(&tmp[0], Y, 1) + unary[b, t, j]
            logz[b] = _lse(&alpha[b, W - 1, 0], Y, 1)
    return logz_a, alpha_a


def crf_marginals(double[:, :, ::1] unary, double[:, ::1] trans, cnp.int64_t[::1] start,
                  double[::1] logz, double[:, :, ::1] alpha):
    cdef int B = unary.shape[0], W = unary.shape[1], Y = unary.shape[2]
    node_a = np.zeros((B, W, Y))
    edge_a = np.zeros((Y + 1, Y))
    beta_a = np.zeros((W, Y))
    tmp_a = np.empty(Y)
    cdef double[:, :, ::1] node = node_a
    cdef double[:, ::1] edge = edge_a, beta = beta_a
    cdef double[::1] tmp = tmp_a
    cdef int b, s, t, i, j
    with nogil:
        for b in range(B):
            s = <int>start[b]
            for j in range(Y):
                beta[W - 1, j] = 0.0
            for t in range(W - 2, s - 1, -1):
                for i in range(Y):
                    for j in range(Y):
                        tmp[j] = trans[i, j] + unary[b, t + 1, j] + beta[t + 1, j]
                    beta[t, i] = _lse(&tmp[0], Y, 1)
            for t in range(s, W):
                for j in range(Y):
                    node[b, t, j] = exp(alpha[b, t, j] + beta[t, j] - logz[b])
            for j in range(Y):
                edge[Y, j] += node[b, s, j]
            for t in range(s + 1, W):
                for i in range(Y):
                    for j in range(Y):
                        edge[i, j] += exp(alpha[b, t - 1, i] + trans[i, j] + unary[b, t, j]
                                          + beta[t, j] - logz[b])
    return node_a, edge_a


def crf_viterbi(double[:, :, ::1] unary, double[:, ::1] trans, cnp.int64_t[::1] start):
    cdef int B = unary.shape[0], W = unary.shape[1], Y = unary.shape[2]
    paths_a = np.full((B, W), -1, dtype=np.int64)
    scores_a = np.empty(B)
    back_a = np.zeros((W, Y), dtype=np.int64)
    delta_a = np.empty(Y)
    nxt_a = np.empty(Y)
    cdef cnp.int64_t[:, ::1] paths = paths_a, back = back_a
    cdef double[::1] scores = scores_a, delta = delta_a, nxt = nxt_a
    cdef int b, s, t, i, j, arg
    cdef double best, v
    with nogil:
        for b in range(B):
            s = <int>start[b]
            for j in range(Y):
                delta[j] = trans[Y, j] + unary[b, s, j]
            for t in range(s + 1, W):
                for j in range(Y):
                    arg = 0
                    best = delta[0] + trans[0, j]
                    for i in range(1, Y):
                        v = delta[i] + trans[i, j]
                        if v > best:
                            best = v
                            arg = i
                    back[t, j] = arg
                    nxt[j] = best + unary[b, t, j]
                for j in range(Y):
                    delta[j] = nxt[j]
            arg = 0
            for j in range(1, Y):
                if delta[j] > delta[arg]:
                    arg = j
            scores[b] = delta[arg]
            paths[b, W - 1] = arg
            for t in range(W - 1, s, -1):
                arg = <int>back[t, arg]
                paths[b, t - 1] = arg
    return paths_a, scores_a
