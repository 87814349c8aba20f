"""Unrestricted maximum-likelihood fitting via multi-start EM, and
class-count selection by BIC.

Each start draws interior initial values from its own deterministic RNG
stream derived from (seed, start_index); the best final log-likelihood
wins. Classes are relabeled so the fitted proportions are descending
(ties broken by smallest original class index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import em_step, posterior_weights
from .errors import ConfigError
from .model import (
    BinaryResponseMatrix,
    ClassProportions,
    ItemProbMatrix,
    LcaModel,
    log_tables,
    _readonly,
)

EMPTY_CLASS_WEIGHT = 1e-8


@dataclass(frozen=True)
class EmConfig:
    """Settings for one EM estimation problem."""

    max_iterations: int = 2000
    tolerance: float = 1e-7
    n_starts: int = 20
    seed: int = 0
    clamp_epsilon: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.tolerance <= 0:
            raise ConfigError("tolerance must be positive")
        if self.n_starts < 1:
            raise ConfigError("n_starts must be >= 1")


@dataclass(frozen=True)
class FitDiagnostics:
    """Trace of the winning EM run."""

    iterations_used: int
    converged: bool
    ll_trace: np.ndarray
    start_index_selected: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "ll_trace", _readonly(np.asarray(self.ll_trace, dtype=np.float64))
        )


def start_rng(seed: int, start_index: int) -> np.random.Generator:
    """Independent deterministic stream for one EM start."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(start_index,)))


def compress_patterns(y: np.ndarray):
    """Collapse duplicate response rows to (patterns, counts).

    Worth doing only when patterns repeat a lot (small J); returns
    (y, None) when compression would not at least halve the row count.
    """
    patterns, counts = np.unique(y, axis=0, return_counts=True)
    if 2 * patterns.shape[0] <= y.shape[0]:
        return np.ascontiguousarray(patterns), counts.astype(np.float64)
    return y, None


def _init_params(rng: np.random.Generator, n_items: int, k: int):
    u = rng.random(k) + 1e-12
    nu = u / u.sum()
    beta = rng.uniform(0.2, 0.8, size=(n_items, k))
    return nu, beta


def _em_single_start(y, counts, k, config, rng):
    """One EM run; returns (nu, beta, ll, trace, converged, iterations)."""
    n, j = y.shape
    eps = config.clamp_epsilon
    nu, beta = _init_params(rng, j, k)

    ll, nu_next, beta_next, t = em_step(y, nu, beta, eps, counts)
    trace = [ll]
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        dead = t < EMPTY_CLASS_WEIGHT
        if dead.any():
            # Keep the run alive: re-seed the vanished class interior.
            for kk in np.flatnonzero(dead):
                beta_next[:, kk] = rng.uniform(0.2, 0.8, size=j)
        nu, beta = nu_next, beta_next
        ll_new, nu_next, beta_next, t = em_step(y, nu, beta, eps, counts)
        trace.append(ll_new)
        if abs(ll_new - ll) < config.tolerance:
            converged = True
            ll = ll_new
            break
        ll = ll_new
    return nu, beta, ll, trace, converged, iterations


def _relabel_descending(nu: np.ndarray, beta: np.ndarray):
    # argsort of -nu is stable, so exact ties keep the smaller original index.
    order = np.argsort(-nu, kind="stable")
    return nu[order], beta[:, order]


def em_fit(
    data: BinaryResponseMatrix, k: int, config: EmConfig = EmConfig()
) -> tuple[LcaModel, FitDiagnostics]:
    """Fit a K-class model by EM, keeping the best of ``n_starts`` runs.

    The E-step computes class posteriors; the M-step sets
    nu_k = mean_i gamma_ik and beta_jk = sum_i gamma_ik y_ij / sum_i gamma_ik,
    clamped to the interior. Non-convergence within ``max_iterations`` is
    reported through the diagnostics, never raised.
    """
    n, j = data.n_respondents, data.n_items
    if k < 1:
        raise ConfigError(f"number of classes must be >= 1, got {k}")
    if k > n:
        raise ConfigError(f"number of classes k={k} exceeds sample size {n}")
    if k > 2**j:
        raise ConfigError(f"k={k} exceeds the 2^J={2**j} distinct response patterns")
    eps = config.clamp_epsilon

    if k == 1:
        # Closed form: one class holds everything.
        beta = np.clip(data.values.mean(axis=0, dtype=np.float64)[:, None], eps, 1.0 - eps)
        nu = np.array([1.0])
        _, ll = posterior_weights(data.values, *log_tables(nu, beta, eps))
        model = LcaModel(1, ClassProportions(nu), ItemProbMatrix(beta), ll, n)
        return model, FitDiagnostics(1, True, [ll], 0)

    patterns, counts = compress_patterns(data.values)
    best = None
    for start in range(config.n_starts):
        rng = start_rng(config.seed, start)
        result = _em_single_start(patterns, counts, k, config, rng)
        if best is None or result[2] > best[1][2]:
            best = (start, result)

    start_index, (nu, beta, ll, trace, converged, iterations) = best
    nu, beta = _relabel_descending(nu, beta)
    model = LcaModel(k, ClassProportions(nu), ItemProbMatrix(beta), ll, n)
    return model, FitDiagnostics(iterations, converged, trace, start_index)


def select_num_classes(
    data: BinaryResponseMatrix, k_min: int, k_max: int, config: EmConfig = EmConfig()
) -> tuple[int, list[tuple[int, float]]]:
    """Fit every class count in [k_min, k_max] and pick the BIC minimizer.

    Returns the selected count and the full (k, bic) trace; ties go to the
    smaller count.
    """
    from .model import bic

    if not 1 <= k_min <= k_max:
        raise ConfigError(f"invalid class-count range [{k_min}, {k_max}]")
    trace = []
    best_k, best_bic = k_min, np.inf
    for k in range(k_min, k_max + 1):
        model, _ = em_fit(data, k, config)
        value = bic(data, model)
        trace.append((k, value))
        if value < best_bic:
            best_k, best_bic = k, value
    return best_k, trace
