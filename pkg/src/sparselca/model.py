"""Domain types, marginal log-likelihood, posteriors, and BIC.

The latent class model has K classes with proportions nu and a J x K
item-response probability matrix beta: conditionally on membership in
class k, item j is endorsed with probability beta[j, k], independently
across items. All likelihood arithmetic runs in natural-log space with a
per-respondent log-sum-exp over classes; response probabilities are
clamped to [eps, 1 - eps] before evaluation because the log-likelihood is
undefined at the boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._backend import posterior_weights
from .errors import DimensionMismatchError, NumericalError

DEFAULT_CLAMP = 1e-6

SIMPLEX_TOL = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class BinaryResponseMatrix:
    """N x J matrix of 0/1 responses, the sole data input.

    ``values`` is stored as a C-contiguous uint8 array. Item labels are
    optional and carried through reports unchanged.
    """

    values: np.ndarray
    item_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.uint8)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DimensionMismatchError(
                f"response matrix must be 2-D and non-empty, got shape {np.shape(self.values)}"
            )
        if not np.isin(v, (0, 1)).all():
            raise ValueError("response matrix entries must be exactly 0 or 1")
        if self.item_labels is not None and len(self.item_labels) != v.shape[1]:
            raise DimensionMismatchError(
                f"{len(self.item_labels)} item labels for {v.shape[1]} items"
            )
        object.__setattr__(self, "values", _readonly(v))

    @property
    def n_respondents(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ClassProportions:
    """Probability vector over the K latent classes."""

    nu: np.ndarray

    def __post_init__(self):
        nu = np.ascontiguousarray(self.nu, dtype=np.float64)
        if nu.ndim != 1 or nu.size < 1:
            raise DimensionMismatchError("class proportions must be a non-empty vector")
        if (nu < 0).any() or (nu > 1).any():
            raise ValueError("class proportions must lie in [0, 1]")
        if abs(nu.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"class proportions sum to {nu.sum()!r}, not 1")
        object.__setattr__(self, "nu", _readonly(nu))

    def __len__(self) -> int:
        return self.nu.size


@dataclass(frozen=True)
class ItemProbMatrix:
    """J x K matrix of item-response probabilities.

    Entries are validated to [0, 1]; the clamp to [eps, 1 - eps] is applied
    at likelihood-evaluation time so that exact 0/1 truth values remain
    representable for simulation.
    """

    beta: np.ndarray

    def __post_init__(self):
        b = np.ascontiguousarray(self.beta, dtype=np.float64)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise DimensionMismatchError("item probability matrix must be 2-D and non-empty")
        if (b < 0).any() or (b > 1).any() or not np.isfinite(b).all():
            raise ValueError("item probabilities must lie in [0, 1]")
        object.__setattr__(self, "beta", _readonly(b))

    @property
    def n_items(self) -> int:
        return self.beta.shape[0]

    @property
    def n_classes(self) -> int:
        return self.beta.shape[1]


@dataclass(frozen=True)
class LcaModel:
    """A latent class model: proportions, item probabilities, and fit info."""

    k: int
    proportions: ClassProportions
    items: ItemProbMatrix
    log_likelihood: float
    n_used: int

    def __post_init__(self):
        if len(self.proportions) != self.k:
            raise DimensionMismatchError(
                f"{len(self.proportions)} proportions for k={self.k} classes"
            )
        if self.items.n_classes != self.k:
            raise DimensionMismatchError(
                f"item matrix has {self.items.n_classes} columns for k={self.k} classes"
            )
        if not np.isfinite(self.log_likelihood):
            raise NumericalError(f"log-likelihood is not finite: {self.log_likelihood!r}")

    @property
    def nu(self) -> np.ndarray:
        return self.proportions.nu

    @property
    def beta(self) -> np.ndarray:
        return self.items.beta


@dataclass(frozen=True)
class PosteriorMatrix:
    """N x K class-membership posteriors; every row sums to 1."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(self.gamma, dtype=np.float64)
        if g.ndim != 2:
            raise DimensionMismatchError("posterior matrix must be 2-D")
        if (g < 0).any() or (g > 1).any():
            raise ValueError("posterior entries must lie in [0, 1]")
        rowsum = g.sum(axis=1)
        bad = np.abs(rowsum - 1.0) > SIMPLEX_TOL
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(f"posterior row {i} sums to {rowsum[i]!r}, not 1")
        object.__setattr__(self, "gamma", _readonly(g))

    @property
    def n_classes(self) -> int:
        return self.gamma.shape[1]


@dataclass(frozen=True)
class OrderedPartition:
    """Ordered disjoint blocks of class indices (0-based) covering {0..K-1}.

    Block order carries meaning: in any estimate built on the partition the
    shared block values increase with block position.
    """

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(c) for c in b) for b in self.blocks)
        if not blocks or any(len(b) == 0 for b in blocks):
            raise ValueError("partition blocks must be non-empty")
        flat = [c for b in blocks for c in b]
        k = len(flat)
        if sorted(flat) != list(range(k)):
            raise ValueError(f"blocks must partition 0..{k - 1} exactly, got {blocks}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def n_classes(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def labels(self) -> np.ndarray:
        """Map each class index to the index of its block."""
        lab = np.empty(self.n_classes, dtype=np.intp)
        for pos, block in enumerate(self.blocks):
            for c in block:
                lab[c] = pos
        return lab

    @classmethod
    def singletons(cls, order) -> "OrderedPartition":
        """One block per class, in the given class order."""
        return cls(tuple((int(c),) for c in order))

    @classmethod
    def from_labels(cls, labels, order=None) -> "OrderedPartition":
        """Group classes by label; blocks ordered by ``order`` (default: label value)."""
        labels = np.asarray(labels)
        ids = np.unique(labels) if order is None else np.asarray(order)
        return cls(tuple(tuple(int(c) for c in np.flatnonzero(labels == t)) for t in ids))


# --- shared computation ---------------------------------------------------


def log_tables(nu: np.ndarray, beta: np.ndarray, eps: float = DEFAULT_CLAMP):
    """Clamped log-odds and per-class base terms used by the kernels.

    Returns (logit, base) with logit[j, k] = log(b) - log(1 - b) for the
    clamped b, and base[k] = log(nu[k]) + sum_j log(1 - b[j, k]).
    """
    b = np.clip(beta, eps, 1.0 - eps)
    log_b = np.log(b)
    log_1mb = np.log1p(-b)
    with np.errstate(divide="ignore"):
        log_nu = np.log(nu)
    return np.ascontiguousarray(log_b - log_1mb), np.ascontiguousarray(
        log_nu + log_1mb.sum(axis=0)
    )


def _check_dims(data: BinaryResponseMatrix, model: LcaModel) -> None:
    if data.n_items != model.items.n_items:
        raise DimensionMismatchError(
            f"data has {data.n_items} items but model has {model.items.n_items}"
        )


def _posterior_raw(data: BinaryResponseMatrix, model: LcaModel, eps: float):
    logit, base = log_tables(model.nu, model.beta, eps)
    gamma, ll = posterior_weights(data.values, logit, base)
    if not np.isfinite(ll):
        bad = ~np.isfinite(gamma).all(axis=1)
        row = int(np.argmax(bad)) if bad.any() else 0
        raise NumericalError(
            f"non-finite likelihood (first offending respondent: row {row})", row_index=row
        )
    return gamma, ll


def log_likelihood(
    data: BinaryResponseMatrix, model: LcaModel, eps: float = DEFAULT_CLAMP
) -> float:
    """Marginal log-likelihood of the data under the model.

    Computed as sum_i log sum_k nu_k prod_j beta_jk^y (1-beta_jk)^(1-y)
    with a per-respondent log-sum-exp over classes.
    """
    _check_dims(data, model)
    _, ll = _posterior_raw(data, model, eps)
    return ll


def posterior(
    data: BinaryResponseMatrix, model: LcaModel, eps: float = DEFAULT_CLAMP
) -> PosteriorMatrix:
    """Posterior class-membership probabilities, one row per respondent."""
    _check_dims(data, model)
    gamma, _ = _posterior_raw(data, model, eps)
    return PosteriorMatrix(gamma)


def n_free_parameters(k: int, n_items: int) -> int:
    """Free-parameter count of the unrestricted model: (K-1) + J*K."""
    return (k - 1) + n_items * k


def bic(data: BinaryResponseMatrix, model: LcaModel) -> float:
    """Bayesian information criterion of a fitted model on its data."""
    _check_dims(data, model)
    p = n_free_parameters(model.k, model.items.n_items)
    return -2.0 * model.log_likelihood + p * np.log(data.n_respondents)


def check_block_order(values: np.ndarray, partition: OrderedPartition, tol: float = 1e-12):
    """Warn when block-level values are not strictly increasing in block order.

    Exact numeric ties across blocks are flagged rather than rejected; the
    ordering holds automatically along the greedy merge path.
    """
    level = np.array([values[b[0]] for b in partition.blocks])
    if (np.diff(level) < tol).any():
        warnings.warn(
            f"block values {level.tolist()} are not strictly increasing across block order",
            RuntimeWarning,
            stacklevel=3,
        )
