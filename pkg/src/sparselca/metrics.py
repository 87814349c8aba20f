"""Evaluation metrics: adjusted Rand index over class partitions,
permutation-aligned parameter MSE, and level-selection counts.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import permutations

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatchError
from .model import ItemProbMatrix, ClassProportions, OrderedPartition

EXHAUSTIVE_PERM_LIMIT = 8


@lru_cache(maxsize=None)
def _all_permutations(k: int) -> np.ndarray:
    return np.array(list(permutations(range(k))), dtype=np.intp)


def _comb2(x):
    return x * (x - 1) / 2.0


def adjusted_rand_index(p1: OrderedPartition, p2: OrderedPartition) -> float:
    """Chance-corrected pair-counting agreement between two partitions.

    Both partitions must cover the same classes. Degenerate cases where the
    expected index equals the maximum (e.g. both single-block) return 1.0.
    """
    k = p1.n_classes
    if p2.n_classes != k:
        raise DimensionMismatchError(
            f"partitions cover {k} and {p2.n_classes} classes respectively"
        )
    l1, l2 = p1.labels(), p2.labels()
    contingency = np.zeros((p1.n_blocks, p2.n_blocks))
    np.add.at(contingency, (l1, l2), 1.0)
    sum_cells = _comb2(contingency).sum()
    sum_rows = _comb2(contingency.sum(axis=1)).sum()
    sum_cols = _comb2(contingency.sum(axis=0)).sum()
    expected = sum_rows * sum_cols / _comb2(k)
    maximum = 0.5 * (sum_rows + sum_cols)
    if maximum == expected:
        return 1.0
    return float((sum_cells - expected) / (maximum - expected))


def _as_beta(x) -> np.ndarray:
    return x.beta if isinstance(x, ItemProbMatrix) else np.asarray(x, dtype=np.float64)


def mse_beta_aligned(estimate, truth) -> tuple[float, tuple[int, ...]]:
    """Minimum over column permutations of the mean squared error of beta.

    Returns (mse, perm) where perm[k] is the estimate column aligned with
    truth column k. Exhaustive over K! for small K; otherwise solved as a
    linear assignment problem on the column-cost matrix, which is exact
    because the objective is additive over assigned columns.
    """
    est, tru = _as_beta(estimate), _as_beta(truth)
    if est.shape != tru.shape:
        raise DimensionMismatchError(f"shapes {est.shape} and {tru.shape} differ")
    j, k = tru.shape
    # cost[a, b] = sum_j (est[j, a] - tru[j, b])^2
    cost = ((est.T[:, None, :] - tru.T[None, :, :]) ** 2).sum(axis=2)
    if k <= EXHAUSTIVE_PERM_LIMIT:
        perms = _all_permutations(k)
        totals = cost[perms, np.arange(k)].sum(axis=1)
        best = int(np.argmin(totals))
        best_perm, best_cost = tuple(int(a) for a in perms[best]), totals[best]
    else:
        rows, cols = linear_sum_assignment(cost)
        best_perm = tuple(int(rows[np.argsort(cols)][b]) for b in range(k))
        best_cost = cost[best_perm, np.arange(k)].sum()
    return float(best_cost / (j * k)), tuple(best_perm)


def mse_nu_aligned(estimate, truth, perm: tuple[int, ...]) -> float:
    """Mean squared error of the proportions under a given alignment."""
    est = estimate.nu if isinstance(estimate, ClassProportions) else np.asarray(estimate)
    tru = truth.nu if isinstance(truth, ClassProportions) else np.asarray(truth)
    if est.shape != tru.shape or len(perm) != tru.size:
        raise DimensionMismatchError("proportions and permutation sizes differ")
    return float(np.mean((est[list(perm)] - tru) ** 2))


def selection_counts(selected, truth) -> tuple[int, int, int]:
    """(under, correct, over) item counts of selected vs true level numbers."""
    selected = np.asarray(selected)
    truth = np.asarray(truth)
    if selected.shape != truth.shape:
        raise DimensionMismatchError("selected and true level vectors differ in length")
    under = int((selected < truth).sum())
    over = int((selected > truth).sum())
    return under, selected.size - under - over, over
