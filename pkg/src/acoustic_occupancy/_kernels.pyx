# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for HMM decoding and diagonal-GMM scoring.

Every function here has a numpy twin in ``_kernels_py`` with the same
signature and tie-breaking rules; ``kernels`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093453


cdef inline double _logsumexp_col(double[:] prev, const double[:, :] log_a, Py_ssize_t j,
                                  Py_ssize_t n) nogil:
    cdef Py_ssize_t i
    cdef double m = -INFINITY
    cdef double v, s = 0.0
    for i in range(n):
        v = prev[i] + log_a[i, j]
        if v > m:
            m = v
    if m == -INFINITY:
        return -INFINITY
    for i in range(n):
        s += exp(prev[i] + log_a[i, j] - m)
    return m + log(s)


cdef inline double _logsumexp_row(double[:] nxt, const double[:, :] log_a, Py_ssize_t i,
                                  Py_ssize_t n) nogil:
    cdef Py_ssize_t j
    cdef double m = -INFINITY
    cdef double v, s = 0.0
    for j in range(n):
        v = log_a[i, j] + nxt[j]
        if v > m:
            m = v
    if m == -INFINITY:
        return -INFINITY
    for j in range(n):
        s += exp(log_a[i, j] + nxt[j] - m)
    return m + log(s)


def viterbi_log(const double[:] log_pi, const double[:, :] log_a, const double[:, :] ll):
    cdef Py_ssize_t T = ll.shape[0]
    cdef Py_ssize_t n = ll.shape[1]
    cdef Py_ssize_t t, i, j, best_i
    cdef double best, v
    delta_arr = np.empty((T, n), dtype=np.float64)
    back_arr = np.zeros((T, n), dtype=np.int64)
    path_arr = np.empty(T, dtype=np.int64)
    cdef double[:, :] delta = delta_arr
    cdef cnp.int64_t[:, :] back = back_arr
    cdef cnp.int64_t[:] path = path_arr

    with nogil:
        for i in range(n):
            delta[0, i] = log_pi[i] + ll[0, i]
        for t in range(1, T):
            for j in range(n):
                best = -INFINITY
                best_i = 0
                for i in range(n):
                    v = delta[t - 1, i] + log_a[i, j]
                    if v > best:
                        best = v
                        best_i = i
                delta[t, j] = best + ll[t, j]
                back[t, j] = best_i
        best = -INFINITY
        best_i = 0
        for i in range(n):
            if delta[T - 1, i] > best:
                best = delta[T - 1, i]
                best_i = i
        path[T - 1] = best_i
        for t in range(T - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
    return path_arr, float(best)


def forward_log(const double[:] log_pi, const double[:, :] log_a, const double[:, :] ll):
    cdef Py_ssize_t T = ll.shape[0]
    cdef Py_ssize_t n = ll.shape[1]
    cdef Py_ssize_t t, j
    alpha_arr = np.empty((T, n), dtype=np.float64)
    cdef double[:, :] alpha = alpha_arr
    with nogil:
        for j in range(n):
            alpha[0, j] = log_pi[j] + ll[0, j]
        for t in range(1, T):
            for j in range(n):
                alpha[t, j] = _logsumexp_col(alpha[t - 1], log_a, j, n) + ll[t, j]
    return alpha_arr


def backward_log(const double[:, :] log_a, const double[:, :] ll):
    cdef Py_ssize_t T = ll.shape[0]
    cdef Py_ssize_t n = ll.shape[1]
    cdef Py_ssize_t t, i, j
    beta_arr = np.zeros((T, n), dtype=np.float64)
    tmp_arr = np.empty(n, dtype=np.float64)
    cdef double[:, :] beta = beta_arr
    cdef double[:] tmp = tmp_arr
    with nogil:
        for t in range(T - 2, -1, -1):
            for j in range(n):
                tmp[j] = ll[t + 1, j] + beta[t + 1, j]
            for i in range(n):
                beta[t, i] = _logsumexp_row(tmp, log_a, i, n)
    return beta_arr


def gmm_log_joint(const double[:, :] X, const double[:] log_weights,
                  const double[:, :] means, const double[:, :] variances):
    """Per-frame, per-component ``log w_m + log N(x_t; mu_m, diag(var_m))``."""
    cdef Py_ssize_t T = X.shape[0]
    cdef Py_ssize_t D = X.shape[1]
    cdef Py_ssize_t M = means.shape[0]
    cdef Py_ssize_t t, m, d
    cdef double acc, diff
    out_arr = np.empty((T, M), dtype=np.float64)
    offset_arr = np.empty(M, dtype=np.float64)
    inv_arr = np.empty((M, D), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef double[:] offset = offset_arr
    cdef double[:, :] inv = inv_arr
    with nogil:
        for m in range(M):
            acc = 0.0
            for d in range(D):
                acc += log(variances[m, d])
                inv[m, d] = 1.0 / variances[m, d]
            offset[m] = log_weights[m] - 0.5 * (D * LOG_2PI + acc)
        for t in range(T):
            for m in range(M):
                acc = 0.0
                for d in range(D):
                    diff = X[t, d] - means[m, d]
                    acc += diff * diff * inv[m, d]
                out[t, m] = offset[m] - 0.5 * acc
    return out_arr
