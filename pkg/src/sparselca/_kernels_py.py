"""Pure-NumPy kernels: the fallback backend.

Same call signatures as the compiled module ``sparselca._kernels``. Both
operate on the binary-data representation of the class log-weights,

    logw[i, k] = base[k] + sum_{j : y[i, j] = 1} logit[j, k],

where ``logit[j, k] = log(beta[j, k]) - log(1 - beta[j, k])`` and
``base[k] = log(nu[k]) + sum_j log(1 - beta[j, k])``.

Every kernel takes an optional per-row ``counts`` vector so callers can
collapse duplicate response patterns (a large win when 2^J << N) without
changing the mathematics.
"""

from __future__ import annotations

import numpy as np


def posterior_weights(y: np.ndarray, logit: np.ndarray, base: np.ndarray, counts=None):
    """Class posteriors and marginal log-likelihood in one pass.

    Parameters
    ----------
    y : uint8 array, shape (n, j)
        Binary responses, one row per respondent (or unique pattern).
    logit : float array, shape (j, k)
        Per-item log-odds of the response probabilities.
    base : float array, shape (k,)
        Per-class offset (log prior plus all-zero-response log-mass).
    counts : float array, shape (n,), optional
        Row multiplicities; omitted means every row counts once.

    Returns
    -------
    gamma : float array, shape (n, k)
        Row-normalized posterior class memberships.
    loglik : float
        Count-weighted sum over rows of the log-sum-exp of the log-weights.
    """
    logw = y.astype(np.float64) @ logit + base
    m = logw.max(axis=1, keepdims=True)
    gamma = np.exp(logw - m)
    tot = gamma.sum(axis=1, keepdims=True)
    gamma /= tot
    row_ll = (np.log(tot) + m).ravel()
    loglik = float(row_ll.sum() if counts is None else counts @ row_ll)
    return gamma, loglik


def weighted_item_counts(y: np.ndarray, gamma: np.ndarray, counts=None):
    """Posterior-weighted sufficient statistics for every item.

    Returns
    -------
    s : float array, shape (j, k)
        ``s[j, k] = sum_i c_i gamma[i, k] y[i, j]``.
    t : float array, shape (k,)
        ``t[k] = sum_i c_i gamma[i, k]``.
    """
    g = gamma if counts is None else gamma * counts[:, None]
    s = y.astype(np.float64).T @ g
    t = g.sum(axis=0)
    return s, t


def em_step(y: np.ndarray, nu: np.ndarray, beta: np.ndarray, eps: float, counts=None):
    """One fused EM iteration for the unrestricted model.

    Returns (loglik, nu_new, beta_new, t): the marginal log-likelihood at
    the *input* parameters, the M-step update computed from the implied
    posteriors, and the posterior class masses t (for degeneracy checks).
    """
    b = np.clip(beta, eps, 1.0 - eps)
    log_b = np.log(b)
    log_1mb = np.log1p(-b)
    with np.errstate(divide="ignore"):
        base = np.log(nu) + log_1mb.sum(axis=0)
    gamma, loglik = posterior_weights(y, np.ascontiguousarray(log_b - log_1mb), base, counts)
    s, t = weighted_item_counts(y, gamma, counts)
    nu_new = t / t.sum()
    beta_new = np.clip(s / t, eps, 1.0 - eps)
    return loglik, nu_new, beta_new, t
