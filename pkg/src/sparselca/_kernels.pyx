# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: fused posterior/log-likelihood pass, weighted counts,
and a fused EM step. Signatures match sparselca._kernels_py; see that
module for the log-weight decomposition these loops implement.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, exp, log, log1p

cnp.import_array()


def posterior_weights(const unsigned char[:, ::1] y,
                      const double[:, ::1] logit,
                      const double[::1] base,
                      counts=None):
    """Row posteriors and (count-weighted) total marginal log-likelihood."""
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t j = y.shape[1]
    cdef Py_ssize_t k = base.shape[0]
    gamma_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] gamma = gamma_arr
    cdef const double[::1] c = (
        np.ascontiguousarray(counts, dtype=np.float64) if counts is not None else None
    )
    cdef bint weighted = counts is not None
    cdef double loglik = 0.0
    cdef double mx, tot
    cdef Py_ssize_t i, jj, kk

    for i in range(n):
        for kk in range(k):
            gamma[i, kk] = base[kk]
        for jj in range(j):
            if y[i, jj]:
                for kk in range(k):
                    gamma[i, kk] += logit[jj, kk]
        mx = gamma[i, 0]
        for kk in range(1, k):
            if gamma[i, kk] > mx:
                mx = gamma[i, kk]
        tot = 0.0
        for kk in range(k):
            gamma[i, kk] = exp(gamma[i, kk] - mx)
            tot += gamma[i, kk]
        for kk in range(k):
            gamma[i, kk] /= tot
        if weighted:
            loglik += c[i] * (log(tot) + mx)
        else:
            loglik += log(tot) + mx
    return gamma_arr, loglik


def weighted_item_counts(const unsigned char[:, ::1] y,
                         const double[:, ::1] gamma,
                         counts=None):
    """s[j, k] = sum_i c_i gamma[i, k] y[i, j]; t[k] = sum_i c_i gamma[i, k]."""
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t j = y.shape[1]
    cdef Py_ssize_t k = gamma.shape[1]
    s_arr = np.zeros((j, k), dtype=np.float64)
    t_arr = np.zeros(k, dtype=np.float64)
    cdef double[:, ::1] s = s_arr
    cdef double[::1] t = t_arr
    cdef const double[::1] c = (
        np.ascontiguousarray(counts, dtype=np.float64) if counts is not None else None
    )
    cdef bint weighted = counts is not None
    cdef double g
    cdef Py_ssize_t i, jj, kk

    for i in range(n):
        for kk in range(k):
            g = c[i] * gamma[i, kk] if weighted else gamma[i, kk]
            t[kk] += g
        for jj in range(j):
            if y[i, jj]:
                for kk in range(k):
                    g = c[i] * gamma[i, kk] if weighted else gamma[i, kk]
                    s[jj, kk] += g
    return s_arr, t_arr


def em_step(const unsigned char[:, ::1] y, const double[::1] nu,
            const double[:, ::1] beta, double eps, counts=None):
    """One fused EM iteration: log-likelihood at the input parameters plus
    the M-step update, without materializing the posterior matrix."""
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t j = y.shape[1]
    cdef Py_ssize_t k = nu.shape[0]
    logit_arr = np.empty((j, k), dtype=np.float64)
    base_arr = np.empty(k, dtype=np.float64)
    s_arr = np.zeros((j, k), dtype=np.float64)
    t_arr = np.zeros(k, dtype=np.float64)
    nu_arr = np.empty(k, dtype=np.float64)
    beta_arr = np.empty((j, k), dtype=np.float64)
    cdef double[:, ::1] logit = logit_arr
    cdef double[::1] base = base_arr
    cdef double[:, ::1] s = s_arr
    cdef double[::1] t = t_arr
    cdef double[::1] nu_new = nu_arr
    cdef double[:, ::1] beta_new = beta_arr
    cdef double[::1] w = np.empty(k, dtype=np.float64)
    cdef const double[::1] c = (
        np.ascontiguousarray(counts, dtype=np.float64) if counts is not None else None
    )
    cdef bint weighted = counts is not None
    cdef double b, mx, tot, ci, loglik = 0.0, tsum
    cdef Py_ssize_t i, jj, kk

    for kk in range(k):
        base[kk] = log(nu[kk]) if nu[kk] > 0.0 else -INFINITY
    for jj in range(j):
        for kk in range(k):
            b = beta[jj, kk]
            if b < eps:
                b = eps
            elif b > 1.0 - eps:
                b = 1.0 - eps
            logit[jj, kk] = log(b) - log1p(-b)
            base[kk] += log1p(-b)

    for i in range(n):
        ci = c[i] if weighted else 1.0
        for kk in range(k):
            w[kk] = base[kk]
        for jj in range(j):
            if y[i, jj]:
                for kk in range(k):
                    w[kk] += logit[jj, kk]
        mx = w[0]
        for kk in range(1, k):
            if w[kk] > mx:
                mx = w[kk]
        tot = 0.0
        for kk in range(k):
            w[kk] = exp(w[kk] - mx)
            tot += w[kk]
        loglik += ci * (log(tot) + mx)
        for kk in range(k):
            w[kk] = ci * w[kk] / tot
            t[kk] += w[kk]
        for jj in range(j):
            if y[i, jj]:
                for kk in range(k):
                    s[jj, kk] += w[kk]

    tsum = 0.0
    for kk in range(k):
        tsum += t[kk]
    for kk in range(k):
        nu_new[kk] = t[kk] / tsum
    for jj in range(j):
        for kk in range(k):
            b = s[jj, kk] / t[kk]
            if b < eps:
                b = eps
            elif b > 1.0 - eps:
                b = 1.0 - eps
            beta_new[jj, kk] = b
    return loglik, nu_arr, beta_arr, t_arr
