"""Item-level refinement: pseudo-likelihood, stepwise merge search, and
EBIC level selection.

For one item, the weighted Bernoulli pseudo-likelihood replaces the latent
labels with the first-stage posteriors. Its constrained maximizer under an
equality partition of the classes has a closed form (pooled weighted
means), so the whole search reduces to arithmetic on two length-K
sufficient-statistic vectors:

    s_k = sum_i gamma_ik * y_ij      t_k = sum_i gamma_ik

The stepwise search keeps the best adjacent merge at each level, producing
one candidate per level count m = 1..K; the EBIC then picks m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateBlockError, DimensionMismatchError
from .model import (
    DEFAULT_CLAMP,
    BinaryResponseMatrix,
    ItemProbMatrix,
    OrderedPartition,
    PosteriorMatrix,
    check_block_order,
)

DEGENERATE_WEIGHT = 1e-12


@dataclass(frozen=True)
class EbicConfig:
    """Sparsity-preference constant for the extended BIC penalty.

    rho >= 1 so that sparser per-item level structures are preferred;
    rho = 1 recovers a plain pseudo-BIC.
    """

    rho: float = 20.0

    def __post_init__(self):
        if self.rho < 1.0:
            raise ConfigError(f"rho must be >= 1, got {self.rho}")


@dataclass(frozen=True)
class ItemCandidate:
    """One constrained solution for an item: m levels over an ordered partition."""

    m: int
    partition: OrderedPartition
    beta: np.ndarray
    pseudo_ll: float

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        object.__setattr__(self, "beta", beta)
        if self.partition.n_blocks != self.m:
            raise ValueError(f"partition has {self.partition.n_blocks} blocks for m={self.m}")
        check_block_order(beta, self.partition)

    def block_values(self) -> np.ndarray:
        """Shared value of each block, in block order."""
        return np.array([self.beta[b[0]] for b in self.partition.blocks])


@dataclass(frozen=True)
class ItemRefinement:
    """Full per-item refinement trace and the EBIC-selected solution."""

    item_index: int
    candidates: tuple[ItemCandidate, ...]
    ebic_trace: np.ndarray
    selected_m: int
    selected_partition: OrderedPartition

    @property
    def selected(self) -> ItemCandidate:
        return self.candidates[self.selected_m - 1]


def item_sufficient_stats(item_responses: np.ndarray, gamma: np.ndarray):
    """(s, t) with s_k = sum_i gamma_ik y_i and t_k = sum_i gamma_ik."""
    y = np.asarray(item_responses, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != gamma.shape[0]:
        raise DimensionMismatchError(
            f"item has {y.shape} responses for {gamma.shape[0]} posterior rows"
        )
    return gamma.T @ y, gamma.sum(axis=0)


def _pseudo_ll_from_stats(s: np.ndarray, t: np.ndarray, beta_j: np.ndarray, eps: float) -> float:
    b = np.clip(beta_j, eps, 1.0 - eps)
    return float(s @ np.log(b) + (t - s) @ np.log1p(-b))


def pseudo_likelihood(
    item_responses: np.ndarray,
    gamma: PosteriorMatrix | np.ndarray,
    beta_j: np.ndarray,
    eps: float = DEFAULT_CLAMP,
) -> float:
    """Weighted Bernoulli log-likelihood of one item under posteriors gamma.

    Equals sum_i sum_k gamma_ik (y_i log b_k + (1 - y_i) log(1 - b_k)),
    evaluated through the sufficient statistics.
    """
    g = gamma.gamma if isinstance(gamma, PosteriorMatrix) else np.asarray(gamma)
    beta_j = np.asarray(beta_j, dtype=np.float64)
    if beta_j.shape != (g.shape[1],):
        raise DimensionMismatchError(
            f"beta has shape {beta_j.shape} for {g.shape[1]} classes"
        )
    s, t = item_sufficient_stats(item_responses, g)
    return _pseudo_ll_from_stats(s, t, beta_j, eps)


def block_solution(
    suff_s: np.ndarray,
    suff_t: np.ndarray,
    partition: OrderedPartition,
    eps: float = DEFAULT_CLAMP,
) -> ItemCandidate:
    """Exact constrained maximizer for one partition: pooled weighted means.

    Each block's shared value is (sum of s over the block) / (sum of t over
    the block), clamped to the interior; the pseudo-likelihood decomposes
    over blocks, so this is the global constrained optimum.
    """
    suff_s = np.asarray(suff_s, dtype=np.float64)
    suff_t = np.asarray(suff_t, dtype=np.float64)
    k = partition.n_classes
    if suff_s.shape != (k,) or suff_t.shape != (k,):
        raise DimensionMismatchError("sufficient statistics do not match the partition size")
    beta = np.empty(k)
    for pos, block in enumerate(partition.blocks):
        idx = list(block)
        t_pool = suff_t[idx].sum()
        if t_pool <= DEGENERATE_WEIGHT:
            raise DegenerateBlockError(
                f"block {pos} {tuple(block)} has total posterior weight {t_pool!r}",
                block_index=pos,
            )
        value = float(np.clip(suff_s[idx].sum() / t_pool, eps, 1.0 - eps))
        beta[idx] = value
    pll = _pseudo_ll_from_stats(suff_s, suff_t, beta, eps)
    return ItemCandidate(partition.n_blocks, partition, beta, pll)


def stepwise_search(
    item_responses: np.ndarray,
    gamma: PosteriorMatrix | np.ndarray,
    beta_hat_j: np.ndarray,
    eps: float = DEFAULT_CLAMP,
) -> list[ItemCandidate]:
    """Greedy adjacent-merge search; returns candidates for m = 1..K.

    Classes are sorted by the unrestricted estimate (stable, so exact ties
    keep class-index order) into the singleton ordered partition; each step
    keeps the adjacent merge with the largest pseudo-likelihood.
    """
    g = gamma.gamma if isinstance(gamma, PosteriorMatrix) else np.asarray(gamma)
    beta_hat_j = np.asarray(beta_hat_j, dtype=np.float64)
    k = g.shape[1]
    if beta_hat_j.shape != (k,):
        raise DimensionMismatchError(f"beta has shape {beta_hat_j.shape} for {k} classes")
    s, t = item_sufficient_stats(item_responses, g)

    order = np.argsort(beta_hat_j, kind="stable")
    partition = OrderedPartition.singletons(order)
    # The K-level candidate is the unrestricted estimate itself.
    top = ItemCandidate(k, partition, beta_hat_j, _pseudo_ll_from_stats(s, t, beta_hat_j, eps))
    candidates: list[ItemCandidate] = [top]
    for level in range(k, 1, -1):
        blocks = candidates[-1].partition.blocks
        merged = [
            block_solution(
                s, t, OrderedPartition(blocks[:b] + (blocks[b] + blocks[b + 1],) + blocks[b + 2 :]), eps
            )
            for b in range(level - 1)
        ]
        best = max(range(level - 1), key=lambda b: merged[b].pseudo_ll)
        candidates.append(merged[best])
    candidates.reverse()
    return candidates


def ebic(candidate: ItemCandidate, n: int, config: EbicConfig = EbicConfig()) -> float:
    """-2 Q + m log(n) + 2 m log(rho)."""
    if n < 1:
        raise ConfigError(f"sample size must be >= 1, got {n}")
    m = candidate.m
    return -2.0 * candidate.pseudo_ll + m * np.log(n) + 2.0 * m * np.log(config.rho)


def select_level(
    candidates: list[ItemCandidate] | tuple[ItemCandidate, ...],
    n: int,
    config: EbicConfig = EbicConfig(),
) -> tuple[int, np.ndarray]:
    """EBIC argmin over the candidate list; ties go to the smaller m."""
    trace = np.array([ebic(c, n, config) for c in candidates])
    return int(np.argmin(trace)) + 1, trace


def refine_item(
    item_index: int,
    data: BinaryResponseMatrix,
    gamma: PosteriorMatrix,
    beta_hat: ItemProbMatrix,
    config: EbicConfig = EbicConfig(),
) -> ItemRefinement:
    """Stepwise search plus EBIC selection for one item."""
    if not 0 <= item_index < data.n_items:
        raise DimensionMismatchError(
            f"item index {item_index} out of range for {data.n_items} items"
        )
    candidates = stepwise_search(
        data.values[:, item_index], gamma, beta_hat.beta[item_index, :]
    )
    selected_m, trace = select_level(candidates, data.n_respondents, config)
    return ItemRefinement(
        item_index=item_index,
        candidates=tuple(candidates),
        ebic_trace=trace,
        selected_m=selected_m,
        selected_partition=candidates[selected_m - 1].partition,
    )


def _partitions_with_m_blocks(k: int, m: int):
    """All set partitions of {0..k-1} into exactly m unordered blocks."""

    def extend(element: int, blocks: list[list[int]]):
        if element == k:
            if len(blocks) == m:
                yield [tuple(b) for b in blocks]
            return
        # Prune: remaining elements must be able to fill m blocks.
        if len(blocks) + (k - element) < m:
            return
        for b in blocks:
            b.append(element)
            yield from extend(element + 1, blocks)
            b.pop()
        if len(blocks) < m:
            blocks.append([element])
            yield from extend(element + 1, blocks)
            blocks.pop()

    yield from extend(0, [])


def exhaustive_item_oracle(
    item_responses: np.ndarray,
    gamma: PosteriorMatrix | np.ndarray,
    m: int,
    eps: float = DEFAULT_CLAMP,
) -> ItemCandidate:
    """Best m-level solution over every set partition, adjacency ignored.

    Test oracle: enumeration is super-exponential in K, so K is capped
    at 10 and intended use is K <= 5.
    """
    g = gamma.gamma if isinstance(gamma, PosteriorMatrix) else np.asarray(gamma)
    k = g.shape[1]
    if k > 10:
        raise ConfigError(f"exhaustive oracle refused for K={k} > 10")
    if not 1 <= m <= k:
        raise ConfigError(f"m={m} out of range 1..{k}")
    s, t = item_sufficient_stats(item_responses, g)

    best: ItemCandidate | None = None
    for blocks in _partitions_with_m_blocks(k, m):
        # Order blocks by their pooled value so the partition is a valid
        # ordered partition regardless of adjacency.
        pooled = [s[list(b)].sum() / max(t[list(b)].sum(), DEGENERATE_WEIGHT) for b in blocks]
        ordered = OrderedPartition(tuple(b for _, b in sorted(zip(pooled, blocks))))
        candidate = block_solution(s, t, ordered, eps)
        if best is None or candidate.pseudo_ll > best.pseudo_ll:
            best = candidate
    return best
