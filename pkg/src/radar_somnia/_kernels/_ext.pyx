# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: banded DTW and the LSTM time recurrence.

Semantics are identical to :mod:`radar_somnia._kernels._pyimpl`; only the
arithmetic order inside BLAS calls may differ at rounding level.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh, fabs, INFINITY
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

BACKEND = "cython"


cdef inline double _sigmoid(double x) nogil:
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


def dtw(const double[::1] a, const double[::1] b, Py_ssize_t band=-1):
    """Return ``(cost, path_length)`` of the optimal warping path."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    cdef Py_ssize_t i, j, lo, hi, w
    cdef double best, up, left, diag
    cdef Py_ssize_t lbest
    if n == 0 or m == 0:
        raise ValueError("empty sequence")
    if band < 0:
        w = n if n > m else m
    else:
        w = band
        if w < (n - m if n > m else m - n):
            w = n - m if n > m else m - n
    cost_arr = np.full((n, m), np.inf)
    len_arr = np.zeros((n, m), dtype=np.intp)
    cdef double[:, ::1] D = cost_arr
    cdef Py_ssize_t[:, ::1] L = len_arr
    with nogil:
        for i in range(n):
            lo = i - w
            if lo < 0:
                lo = 0
            hi = i + w + 1
            if hi > m:
                hi = m
            for j in range(lo, hi):
                if i == 0 and j == 0:
                    D[0, 0] = fabs(a[0] - b[0])
                    L[0, 0] = 1
                    continue
                diag = D[i - 1, j - 1] if (i > 0 and j > 0) else INFINITY
                up = D[i - 1, j] if i > 0 else INFINITY
                left = D[i, j - 1] if j > 0 else INFINITY
                best = diag
                lbest = L[i - 1, j - 1] if (i > 0 and j > 0) else 0
                if up < best:
                    best = up
                    lbest = L[i - 1, j]
                if left < best:
                    best = left
                    lbest = L[i, j - 1]
                D[i, j] = fabs(a[i] - b[j]) + best
                L[i, j] = lbest + 1
    return float(D[n - 1, m - 1]), int(L[n - 1, m - 1])


def lstm_forward(const double[:, :, ::1] xw, const double[:, ::1] wh):
    """Run one LSTM direction over time.

    ``xw`` is ``(T, B, 4H)`` holding input projections plus bias, gate order
    i, f, g, o. Returns ``hs, cs, acts`` with shapes ``(T, B, H)``,
    ``(T, B, H)`` and ``(T, B, 4H)`` (post-activation gates).
    """
    cdef Py_ssize_t T = xw.shape[0], B = xw.shape[1], G = xw.shape[2]
    cdef Py_ssize_t H = G // 4
    if wh.shape[0] != H or wh.shape[1] != G:
        raise ValueError("recurrent weight shape mismatch")
    hs_arr = np.zeros((T, B, H))
    cs_arr = np.zeros((T, B, H))
    acts_arr = np.empty((T, B, G))
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] cs = cs_arr
    cdef double[:, :, ::1] acts = acts_arr
    cdef Py_ssize_t t, bb, k
    cdef double ig, fg, gg, og, cprev, c
    cdef int m_ = <int>G, n_ = <int>B, k_ = <int>H
    cdef double one = 1.0
    cdef char tn = b'N'
    with nogil:
        for t in range(T):
            for bb in range(B):
                for k in range(G):
                    acts[t, bb, k] = xw[t, bb, k]
            if t > 0 and H > 0 and B > 0:
                dgemm(&tn, &tn, &m_, &n_, &k_, &one, <double*>&wh[0, 0], &m_,
                      &hs[t - 1, 0, 0], &k_, &one, &acts[t, 0, 0], &m_)
            for bb in range(B):
                for k in range(H):
                    ig = _sigmoid(acts[t, bb, k])
                    fg = _sigmoid(acts[t, bb, H + k])
                    gg = tanh(acts[t, bb, 2 * H + k])
                    og = _sigmoid(acts[t, bb, 3 * H + k])
                    cprev = cs[t - 1, bb, k] if t > 0 else 0.0
                    c = fg * cprev + ig * gg
                    cs[t, bb, k] = c
                    hs[t, bb, k] = og * tanh(c)
                    acts[t, bb, k] = ig
                    acts[t, bb, H + k] = fg
                    acts[t, bb, 2 * H + k] = gg
                    acts[t, bb, 3 * H + k] = og
    return hs_arr, cs_arr, acts_arr


def lstm_backward(const double[:, :, ::1] dhs, const double[:, :, ::1] cs,
                  const double[:, :, ::1] acts, const double[:, ::1] wh):
    """Backpropagate through one LSTM direction.

    Returns ``dz`` of shape ``(T, B, 4H)``: the loss gradient with respect to
    the gate pre-activations. Weight gradients are reductions over ``dz`` and
    are formed by the caller.
    """
    cdef Py_ssize_t T = dhs.shape[0], B = dhs.shape[1], H = dhs.shape[2]
    cdef Py_ssize_t G = 4 * H
    dz_arr = np.zeros((T, B, G))
    dhn_arr = np.zeros((B, H))
    dcn_arr = np.zeros((B, H))
    cdef double[:, :, ::1] dz = dz_arr
    cdef double[:, ::1] dh_next = dhn_arr
    cdef double[:, ::1] dc_next = dcn_arr
    cdef Py_ssize_t t, bb, k
    cdef double dh, tc, dc, ig, fg, gg, og, cprev
    cdef int m_ = <int>H, n_ = <int>B, k_ = <int>G
    cdef double one = 1.0, zero = 0.0
    cdef char tt = b'T', tn = b'N'
    with nogil:
        for t in range(T - 1, -1, -1):
            for bb in range(B):
                for k in range(H):
                    dh = dhs[t, bb, k] + dh_next[bb, k]
                    ig = acts[t, bb, k]
                    fg = acts[t, bb, H + k]
                    gg = acts[t, bb, 2 * H + k]
                    og = acts[t, bb, 3 * H + k]
                    cprev = cs[t - 1, bb, k] if t > 0 else 0.0
                    tc = tanh(cs[t, bb, k])
                    dc = dh * og * (1.0 - tc * tc) + dc_next[bb, k]
                    dz[t, bb, k] = dc * gg * ig * (1.0 - ig)
                    dz[t, bb, H + k] = dc * cprev * fg * (1.0 - fg)
                    dz[t, bb, 2 * H + k] = dc * ig * (1.0 - gg * gg)
                    dz[t, bb, 3 * H + k] = dh * tc * og * (1.0 - og)
                    dc_next[bb, k] = dc * fg
            if t > 0 and H > 0 and B > 0:
                dgemm(&tt, &tn, &m_, &n_, &k_, &one, <double*>&wh[0, 0], &k_,
                      &dz[t, 0, 0], &k_, &zero, &dh_next[0, 0], &m_)
    return dz_arr
