"""Pure-numpy implementations of the hot kernels.

This is the fallback backend; pingmatch.kernels._core (Cython) implements
the same four functions with identical semantics. Keep the two in sync:
tests compare them element-wise.
"""

from __future__ import annotations

import numpy as np


def _as_f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Split on sign to avoid overflow in exp for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def smoothed_rates(yes, total) -> np.ndarray:
    """Add-one smoothed response rates: (yes + 1) / (total + 2), elementwise."""
    yes = _as_f64(yes)
    total = _as_f64(total)
    return (yes + 1.0) / (total + 2.0)


def score_candidates(features, coef, intercept: float) -> np.ndarray:
    """Probability of a yes response per candidate row: sigmoid(X @ w + b)."""
    x = _as_f64(features)
    w = _as_f64(coef)
    return _sigmoid(x @ w + float(intercept))


def logistic_loss_grad(features, labels, coef, intercept: float, lam: float):
    """Mean negative log-likelihood with an L2 penalty on the coefficients.

    loss = mean(log(1 + exp(z)) - y*z) + (lam/2) * ||w||^2, z = X @ w + b.
    The intercept is not penalized. Returns (loss, grad_coef, grad_intercept).
    """
    x = _as_f64(features)
    y = _as_f64(labels)
    w = _as_f64(coef)
    n = x.shape[0]
    z = x @ w + float(intercept)
    # log(1 + exp(z)) computed as logaddexp(0, z) for stability.
    nll = float(np.sum(np.logaddexp(0.0, z) - y * z)) / n
    loss = nll + 0.5 * lam * float(w @ w)
    p = _sigmoid(z)
    resid = p - y
    grad_coef = x.T @ resid / n + lam * w
    grad_intercept = float(np.sum(resid)) / n
    return loss, grad_coef, grad_intercept


def rank_auc(scores, labels) -> float:
    """Mann-Whitney AUC via the rank statistic, ties credited 0.5.

    Equals P(score of random positive > score of random negative) with ties
    counted half. Average ranks are half-integers, so the computation is
    exact in float64 and matches brute-force pair enumeration bit for bit.
    """
    s = _as_f64(scores)
    y = _as_f64(labels)
    n = s.shape[0]
    n_pos = int(np.sum(y == 1.0))
    n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("rank_auc requires both classes")
    order = np.argsort(s, kind="mergesort")
    s_sorted = s[order]
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    boundary[1:] = s_sorted[1:] != s_sorted[:-1]
    group = np.cumsum(boundary) - 1
    counts = np.bincount(group)
    ends = np.cumsum(counts)  # 1-based rank of last member per tie group
    starts = ends - counts + 1
    avg_rank = (starts + ends) / 2.0
    ranks = np.empty(n)
    ranks[order] = avg_rank[group]
    rank_sum_pos = float(np.sum(ranks[y == 1.0]))
    u = rank_sum_pos - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)
