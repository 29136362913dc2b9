"""Pure numpy implementations of the compiled kernels.

Signatures, return types and tie-breaking match ``_kernels.pyx`` so the two
backends are interchangeable.
"""

import numpy as np
from scipy.special import logsumexp

LOG_2PI = np.log(2.0 * np.pi)

# Frames per chunk in gmm_log_joint; bounds the (chunk, M, D) temporary.
_CHUNK_ELEMENTS = 1 << 20


def viterbi_log(log_pi, log_a, ll):
    log_pi = np.asarray(log_pi, dtype=np.float64)
    log_a = np.asarray(log_a, dtype=np.float64)
    ll = np.asarray(ll, dtype=np.float64)
    T, n = ll.shape
    back = np.zeros((T, n), dtype=np.int64)
    delta = log_pi + ll[0]
    for t in range(1, T):
        cand = delta[:, None] + log_a
        # argmax returns the first maximiser: ties go to the smaller state
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(n)] + ll[t]
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(np.argmax(delta))
    score = float(delta[path[-1]])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, score


def forward_log(log_pi, log_a, ll):
    log_pi = np.asarray(log_pi, dtype=np.float64)
    log_a = np.asarray(log_a, dtype=np.float64)
    ll = np.asarray(ll, dtype=np.float64)
    T, n = ll.shape
    alpha = np.empty((T, n))
    alpha[0] = log_pi + ll[0]
    for t in range(1, T):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + log_a, axis=0) + ll[t]
    return alpha


def backward_log(log_a, ll):
    log_a = np.asarray(log_a, dtype=np.float64)
    ll = np.asarray(ll, dtype=np.float64)
    T, n = ll.shape
    beta = np.zeros((T, n))
    for t in range(T - 2, -1, -1):
        beta[t] = logsumexp(log_a + (ll[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def gmm_log_joint(X, log_weights, means, variances):
    """Per-frame, per-component ``log w_m + log N(x_t; mu_m, diag(var_m))``."""
    X = np.asarray(X, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64)
    variances = np.asarray(variances, dtype=np.float64)
    T, D = X.shape
    M = means.shape[0]
    inv = 1.0 / variances
    offset = np.asarray(log_weights) - 0.5 * (D * LOG_2PI + np.log(variances).sum(axis=1))
    out = np.empty((T, M))
    step = max(1, _CHUNK_ELEMENTS // max(1, M * D))
    for start in range(0, T, step):
        diff = X[start:start + step, None, :] - means[None, :, :]
        out[start:start + step] = offset - 0.5 * np.einsum("tmd,md->tm", diff * diff, inv)
    return out
