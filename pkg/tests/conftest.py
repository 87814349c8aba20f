"""Shared fixtures: the six-item, four-class example truth used throughout."""

from __future__ import annotations

import numpy as np
import pytest

from sparselca import (
    BinaryResponseMatrix,
    ClassProportions,
    ItemProbMatrix,
    LcaModel,
    OrderedPartition,
)

# Six items, four classes; items 1-5 have two distinct levels, item 6 three.
EXAMPLE_BETA = np.array(
    [
        [0.10, 0.10, 0.10, 0.90],
        [0.20, 0.20, 0.80, 0.80],
        [0.15, 0.75, 0.15, 0.75],
        [0.30, 0.30, 0.30, 0.85],
        [0.25, 0.25, 0.90, 0.90],
        [0.20, 0.55, 0.55, 0.95],
    ]
)

EXAMPLE_TRUE_M = (2, 2, 2, 2, 2, 3)

EXAMPLE_TRUE_PARTITIONS = (
    OrderedPartition(((0, 1, 2), (3,))),
    OrderedPartition(((0, 1), (2, 3))),
    OrderedPartition(((0, 2), (1, 3))),
    OrderedPartition(((0, 1, 2), (3,))),
    OrderedPartition(((0, 1), (2, 3))),
    OrderedPartition(((0,), (1, 2), (3,))),
)


@pytest.fixture(scope="session")
def example_truth() -> LcaModel:
    return LcaModel(
        k=4,
        proportions=ClassProportions([0.25, 0.25, 0.25, 0.25]),
        items=ItemProbMatrix(EXAMPLE_BETA),
        log_likelihood=0.0,
        n_used=0,
    )


@pytest.fixture
def small_data() -> BinaryResponseMatrix:
    rng = np.random.default_rng(7)
    return BinaryResponseMatrix((rng.random((5, 3)) < 0.5).astype(np.uint8))


def random_posterior(rng, n, k) -> np.ndarray:
    g = rng.random((n, k)) + 1e-3
    return g / g.sum(axis=1, keepdims=True)
