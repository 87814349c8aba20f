"""Final constrained re-estimation under the selected per-item equality
patterns, with standard errors from the observed information.

The M-step pools each item's sufficient statistics within partition
blocks, so tied entries stay bit-identical through every iteration and
the marginal log-likelihood is monotone. Class labels are inherited from
the initial model (no relabeling) so the partitions stay aligned.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ._backend import posterior_weights, weighted_item_counts
from .em import EmConfig, FitDiagnostics
from .errors import DimensionMismatchError, SingularInformationError
from .model import (
    BinaryResponseMatrix,
    ClassProportions,
    ItemProbMatrix,
    LcaModel,
    OrderedPartition,
    log_tables,
    _readonly,
)


@dataclass(frozen=True)
class SparseLcaModel:
    """Constrained model: per-item equality partitions plus standard errors.

    ``se_beta`` / ``se_nu`` are None until ``standard_errors`` fills them;
    entries tied by a partition block share one SE value.
    """

    base: LcaModel
    partitions: tuple[OrderedPartition, ...]
    se_beta: np.ndarray | None = None
    se_nu: np.ndarray | None = None

    def __post_init__(self):
        if len(self.partitions) != self.base.items.n_items:
            raise DimensionMismatchError(
                f"{len(self.partitions)} partitions for {self.base.items.n_items} items"
            )
        for j, p in enumerate(self.partitions):
            if p.n_classes != self.base.k:
                raise DimensionMismatchError(
                    f"partition for item {j} covers {p.n_classes} classes, model has {self.base.k}"
                )
        for name in ("se_beta", "se_nu"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _readonly(np.asarray(value, dtype=np.float64)))

    @property
    def free_parameter_count(self) -> int:
        return (self.base.k - 1) + sum(p.n_blocks for p in self.partitions)


def _pooled_m_step(s, t, label_list, n_blocks_list, eps):
    """Pool each item's block statistics; tied entries get the same float."""
    j = s.shape[0]
    beta = np.empty_like(s)
    for jj in range(j):
        labels = label_list[jj]
        pooled_s = np.bincount(labels, weights=s[jj], minlength=n_blocks_list[jj])
        pooled_t = np.bincount(labels, weights=t, minlength=n_blocks_list[jj])
        with np.errstate(invalid="ignore", divide="ignore"):
            values = np.clip(pooled_s / pooled_t, eps, 1.0 - eps)
        beta[jj] = values[labels]
    return beta


def constrained_em(
    data: BinaryResponseMatrix,
    partitions: list[OrderedPartition] | tuple[OrderedPartition, ...],
    init: LcaModel,
    config: EmConfig = EmConfig(),
) -> tuple[SparseLcaModel, FitDiagnostics]:
    """EM on the marginal likelihood with block-pooled item probabilities.

    Starts from ``init`` (normally the refined item values with the
    unrestricted proportions); a single run, no multi-start.
    """
    partitions = tuple(partitions)
    if len(partitions) != data.n_items:
        raise DimensionMismatchError(
            f"{len(partitions)} partitions for {data.n_items} items"
        )
    if init.items.n_items != data.n_items:
        raise DimensionMismatchError("init model does not match the data dimensions")
    from .em import compress_patterns

    y, counts = compress_patterns(data.values)
    eps = config.clamp_epsilon
    label_list = [p.labels() for p in partitions]
    n_blocks_list = [p.n_blocks for p in partitions]

    # Preliminary E-step at the init values; the first pooled M-step lands
    # on the constraint set, and the recorded trace starts there.
    gamma, _ = posterior_weights(y, *log_tables(init.nu, init.beta, eps), counts)
    nu, beta = init.nu, init.beta
    trace: list[float] = []
    converged = False
    iterations = 0
    ll = -np.inf
    for iterations in range(1, config.max_iterations + 1):
        s, t = weighted_item_counts(y, gamma, counts)
        nu = t / t.sum()
        beta = _pooled_m_step(s, t, label_list, n_blocks_list, eps)
        gamma, ll_new = posterior_weights(y, *log_tables(nu, beta, eps), counts)
        trace.append(ll_new)
        if abs(ll_new - ll) < config.tolerance:
            converged = True
            ll = ll_new
            break
        ll = ll_new

    base = LcaModel(init.k, ClassProportions(nu), ItemProbMatrix(beta), ll, data.n_respondents)
    model = SparseLcaModel(base, partitions)
    return model, FitDiagnostics(iterations, converged, trace, 0)


def _pack_parameters(model: SparseLcaModel) -> np.ndarray:
    """Free parameters: first K-1 proportions, then block values per item."""
    theta = list(model.base.nu[:-1])
    for j, p in enumerate(model.partitions):
        theta.extend(model.base.beta[j, b[0]] for b in p.blocks)
    return np.array(theta)


def _unpack_parameters(theta, k, partitions, n_items):
    nu = np.empty(k)
    nu[:-1] = theta[: k - 1]
    nu[-1] = 1.0 - nu[:-1].sum()
    beta = np.empty((n_items, k))
    pos = k - 1
    for j, p in enumerate(partitions):
        for block in p.blocks:
            value = theta[pos]
            for c in block:
                beta[j, c] = value
            pos += 1
    return nu, beta


def _constrained_loglik(theta, y, counts, k, partitions, n_items, eps):
    nu, beta = _unpack_parameters(theta, k, partitions, n_items)
    # Tiny floor keeps finite values if a step leaves the open interval.
    nu = np.clip(nu, 1e-300, None)
    beta = np.clip(beta, 1e-12, 1.0 - 1e-12)
    _, ll = posterior_weights(y, *log_tables(nu, beta, eps), counts)
    return ll


def _numerical_hessian(f, theta0, rel_step=1e-5):
    d = theta0.size
    h = rel_step * np.maximum(1.0, np.abs(theta0))
    hess = np.empty((d, d))
    f0 = f(theta0)
    for a in range(d):
        ea = np.zeros(d)
        ea[a] = h[a]
        hess[a, a] = (f(theta0 + ea) - 2.0 * f0 + f(theta0 - ea)) / h[a] ** 2
        for b in range(a + 1, d):
            eb = np.zeros(d)
            eb[b] = h[b]
            mixed = (
                f(theta0 + ea + eb)
                - f(theta0 + ea - eb)
                - f(theta0 - ea + eb)
                + f(theta0 - ea - eb)
            ) / (4.0 * h[a] * h[b])
            hess[a, b] = hess[b, a] = mixed
    return hess


def standard_errors(
    data: BinaryResponseMatrix,
    model: SparseLcaModel,
    eps: float = 1e-6,
    rel_step: float = 1e-5,
) -> SparseLcaModel:
    """Fill in SEs from the observed information of the constrained likelihood.

    The constrained model is parameterized by its free parameters (the
    first K-1 proportions and one probability per partition block); the
    observed information is the negative central-difference Hessian of the
    marginal log-likelihood at the fitted values. The last proportion's SE
    follows from the delta method.
    """
    from .em import compress_patterns

    k = model.base.k
    n_items = model.base.items.n_items
    theta0 = _pack_parameters(model)
    y, counts = compress_patterns(data.values)

    def f(theta):
        return _constrained_loglik(theta, y, counts, k, model.partitions, n_items, eps)

    info = -_numerical_hessian(f, theta0, rel_step)
    eigvals, eigvecs = np.linalg.eigh(info)
    if not np.isfinite(eigvals).all() or eigvals.min() <= 1e-12 * max(eigvals.max(), 1.0):
        weak = int(np.argmin(eigvals))
        param = int(np.argmax(np.abs(eigvecs[:, weak])))
        raise SingularInformationError(
            f"observed information is singular (smallest eigenvalue "
            f"{eigvals.min():.3e} loads on parameter {param})",
            parameter_index=param,
        )
    cov = eigvecs @ np.diag(1.0 / eigvals) @ eigvecs.T

    se_theta = np.sqrt(np.diag(cov))
    se_nu = np.empty(k)
    se_nu[: k - 1] = se_theta[: k - 1]
    # Var(nu_K) = 1' Cov(nu_1..nu_{K-1}) 1 since nu_K = 1 - sum of the rest.
    se_nu[k - 1] = np.sqrt(np.sum(cov[: k - 1, : k - 1])) if k > 1 else 0.0

    se_beta = np.empty((n_items, k))
    pos = k - 1
    for j, p in enumerate(model.partitions):
        for block in p.blocks:
            for c in block:
                se_beta[j, c] = se_theta[pos]
            pos += 1
    assert pos == model.free_parameter_count
    return replace(model, se_beta=se_beta, se_nu=se_nu)
