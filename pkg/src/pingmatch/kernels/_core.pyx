# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Semantics must match pingmatch.kernels._numpy exactly; the test suite
compares the two backends on random inputs.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()


cdef inline double _sig(double z) noexcept nogil:
    cdef double ez
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    ez = exp(z)
    return ez / (1.0 + ez)


cdef inline double _log1pexp(double z) noexcept nogil:
    # log(1 + exp(z)) without overflow for large z.
    if z > 0.0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


def smoothed_rates(yes, total):
    """Add-one smoothed response rates: (yes + 1) / (total + 2), elementwise."""
    cdef double[::1] y = np.ascontiguousarray(yes, dtype=np.float64)
    cdef double[::1] t = np.ascontiguousarray(total, dtype=np.float64)
    cdef Py_ssize_t n = y.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = (y[i] + 1.0) / (t[i] + 2.0)
    return out_arr


def score_candidates(features, coef, double intercept):
    """Probability of a yes response per candidate row: sigmoid(X @ w + b)."""
    cdef double[:, ::1] x = np.ascontiguousarray(features, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k = x.shape[1]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double z
    for i in range(n):
        z = intercept
        for j in range(k):
            z += x[i, j] * w[j]
        out[i] = _sig(z)
    return out_arr


def logistic_loss_grad(features, labels, coef, double intercept, double lam):
    """Mean negative log-likelihood with an L2 penalty on the coefficients.

    loss = mean(log(1 + exp(z)) - y*z) + (lam/2) * ||w||^2, z = X @ w + b.
    The intercept is not penalized. Returns (loss, grad_coef, grad_intercept).
    """
    cdef double[:, ::1] x = np.ascontiguousarray(features, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(labels, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(coef, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k = x.shape[1]
    grad_arr = np.zeros(k, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef Py_ssize_t i, j
    cdef double z, resid, nll = 0.0, grad_b = 0.0, penalty = 0.0
    for i in range(n):
        z = intercept
        for j in range(k):
            z += x[i, j] * w[j]
        nll += _log1pexp(z) - y[i] * z
        resid = _sig(z) - y[i]
        grad_b += resid
        for j in range(k):
            grad[j] += x[i, j] * resid
    for j in range(k):
        grad[j] = grad[j] / n + lam * w[j]
        penalty += w[j] * w[j]
    return nll / n + 0.5 * lam * penalty, grad_arr, grad_b / n


def rank_auc(scores, labels):
    """Mann-Whitney AUC via the rank statistic, ties credited 0.5."""
    cdef double[::1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef double[::1] y = np.ascontiguousarray(labels, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    cdef cnp.intp_t[::1] order = np.argsort(
        np.asarray(s), kind="mergesort"
    ).astype(np.intp, copy=False)
    cdef Py_ssize_t i, j, lo
    cdef Py_ssize_t n_pos = 0
    cdef double rank_sum_pos = 0.0, avg_rank
    cdef Py_ssize_t pos_in_group
    for i in range(n):
        if y[i] == 1.0:
            n_pos += 1
    if n_pos == 0 or n_pos == n:
        raise ValueError("rank_auc requires both classes")
    lo = 0
    while lo < n:
        j = lo
        while j + 1 < n and s[order[j + 1]] == s[order[lo]]:
            j += 1
        # tie group occupies 1-based ranks lo+1 .. j+1
        avg_rank = (lo + j + 2) / 2.0
        pos_in_group = 0
        for i in range(lo, j + 1):
            if y[order[i]] == 1.0:
                pos_in_group += 1
        rank_sum_pos += pos_in_group * avg_rank
        lo = j + 1
    cdef double u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * (n - n_pos))
