"""Core model: types, marginal log-likelihood, posteriors, BIC."""

import numpy as np
import pytest

from sparselca import (
    BinaryResponseMatrix,
    ClassProportions,
    DimensionMismatchError,
    ItemProbMatrix,
    LcaModel,
    OrderedPartition,
    bic,
    log_likelihood,
    posterior,
)

from conftest import random_posterior


def make_model(nu, beta):
    nu = np.asarray(nu, dtype=float)
    beta = np.atleast_2d(np.asarray(beta, dtype=float))
    return LcaModel(
        k=nu.size,
        proportions=ClassProportions(nu),
        items=ItemProbMatrix(beta),
        log_likelihood=0.0,
        n_used=0,
    )


def naive_log_likelihood(y, nu, beta):
    """Direct product-sum evaluation, no log-sum-exp. Small J only."""
    total = 0.0
    for i in range(y.shape[0]):
        mass = 0.0
        for k in range(nu.size):
            p = nu[k]
            for j in range(y.shape[1]):
                p *= beta[j, k] if y[i, j] else 1.0 - beta[j, k]
            mass += p
        total += np.log(mass)
    return total


class TestTypes:
    def test_rejects_non_binary_entries(self):
        with pytest.raises(ValueError):
            BinaryResponseMatrix(np.array([[0, 2], [1, 0]]))

    def test_rejects_empty_matrix(self):
        with pytest.raises(DimensionMismatchError):
            BinaryResponseMatrix(np.zeros((0, 3)))

    def test_proportions_must_sum_to_one(self):
        with pytest.raises(ValueError):
            ClassProportions([0.5, 0.6])

    def test_item_probs_must_be_probabilities(self):
        with pytest.raises(ValueError):
            ItemProbMatrix([[0.2, 1.4]])

    def test_model_dimensions_must_agree(self):
        with pytest.raises(DimensionMismatchError):
            LcaModel(
                k=2,
                proportions=ClassProportions([0.5, 0.5]),
                items=ItemProbMatrix([[0.1, 0.2, 0.3]]),
                log_likelihood=0.0,
                n_used=0,
            )

    def test_partition_must_cover_all_classes(self):
        with pytest.raises(ValueError):
            OrderedPartition(((0, 1), (3,)))
        with pytest.raises(ValueError):
            OrderedPartition(((0, 1), (1, 2)))

    def test_partition_labels_roundtrip(self):
        p = OrderedPartition(((1, 2), (0,), (3,)))
        assert p.labels().tolist() == [1, 0, 0, 2]
        assert OrderedPartition.from_labels(p.labels(), order=range(3)) == p

    def test_immutable_arrays(self):
        data = BinaryResponseMatrix(np.array([[0, 1]], dtype=np.uint8))
        with pytest.raises(ValueError):
            data.values[0, 0] = 1


class TestLogLikelihood:
    def test_single_class_bernoulli(self):
        # Two respondents, one item, beta = 0.5: ll = 2 log(0.5).
        data = BinaryResponseMatrix(np.array([[0], [1]]))
        model = make_model([1.0], [[0.5]])
        assert log_likelihood(data, model) == pytest.approx(2 * np.log(0.5), abs=1e-12)
        assert log_likelihood(data, model) == pytest.approx(-1.3863, abs=1e-4)

    @pytest.mark.parametrize("nu", [[0.5, 0.5], [0.3, 0.7], [0.9, 0.1]])
    def test_degenerate_mixture_equals_pooled_single_class(self, small_data, nu):
        cols = np.array([0.3, 0.6, 0.8])
        two = make_model(nu, np.column_stack([cols, cols]))
        one = make_model([1.0], cols[:, None])
        assert log_likelihood(small_data, two) == pytest.approx(
            log_likelihood(small_data, one), abs=1e-10
        )

    def test_matches_naive_oracle(self, small_data):
        rng = np.random.default_rng(3)
        beta = rng.uniform(0.1, 0.9, size=(3, 2))
        nu = np.array([0.4, 0.6])
        model = make_model(nu, beta)
        expected = naive_log_likelihood(small_data.values, nu, beta)
        assert log_likelihood(small_data, model) == pytest.approx(expected, abs=1e-8)

    def test_permutation_invariance(self, small_data):
        rng = np.random.default_rng(4)
        beta = rng.uniform(0.1, 0.9, size=(3, 3))
        nu = np.array([0.2, 0.3, 0.5])
        perm = [2, 0, 1]
        base = log_likelihood(small_data, make_model(nu, beta))
        permuted = log_likelihood(small_data, make_model(nu[perm], beta[:, perm]))
        assert permuted == pytest.approx(base, abs=1e-10)

    def test_dimension_mismatch(self, small_data):
        with pytest.raises(DimensionMismatchError):
            log_likelihood(small_data, make_model([1.0], [[0.5], [0.5]]))


class TestPosterior:
    def test_single_class_gives_ones(self, small_data):
        model = make_model([1.0], np.array([0.3, 0.5, 0.7])[:, None])
        gamma = posterior(small_data, model).gamma
        assert np.array_equal(gamma, np.ones((5, 1)))

    def test_identical_columns_return_prior(self, small_data):
        cols = np.array([0.3, 0.6, 0.8])
        model = make_model([0.3, 0.7], np.column_stack([cols, cols]))
        gamma = posterior(small_data, model).gamma
        assert np.allclose(gamma, np.tile([0.3, 0.7], (5, 1)), atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(11)
        y = (rng.random((200, 8)) < 0.4).astype(np.uint8)
        data = BinaryResponseMatrix(y)
        model = make_model(
            [0.2, 0.5, 0.3], rng.uniform(0.05, 0.95, size=(8, 3))
        )
        gamma = posterior(data, model).gamma
        assert np.abs(gamma.sum(axis=1) - 1.0).max() < 1e-10

    def test_matches_naive_bayes_rule(self, small_data):
        rng = np.random.default_rng(5)
        beta = rng.uniform(0.1, 0.9, size=(3, 2))
        nu = np.array([0.25, 0.75])
        gamma = posterior(small_data, make_model(nu, beta)).gamma
        for i in range(5):
            mass = np.array(
                [
                    nu[k]
                    * np.prod(
                        np.where(small_data.values[i] == 1, beta[:, k], 1 - beta[:, k])
                    )
                    for k in range(2)
                ]
            )
            assert gamma[i] == pytest.approx(mass / mass.sum(), abs=1e-12)


class TestBic:
    def test_fixed_arithmetic(self):
        data = BinaryResponseMatrix(np.zeros((100, 1), dtype=np.uint8) + 1)
        model = LcaModel(
            k=1,
            proportions=ClassProportions([1.0]),
            items=ItemProbMatrix([[0.5]]),
            log_likelihood=-69.31,
            n_used=100,
        )
        assert bic(data, model) == pytest.approx(138.62 + np.log(100), abs=1e-10)
        assert bic(data, model) == pytest.approx(143.23, abs=0.01)

    def test_penalty_delta_between_class_counts(self):
        y = np.zeros((100, 1), dtype=np.uint8)
        y[:50] = 1
        data = BinaryResponseMatrix(y)
        one = LcaModel(1, ClassProportions([1.0]), ItemProbMatrix([[0.5]]), -69.31, 100)
        two = LcaModel(
            2, ClassProportions([0.5, 0.5]), ItemProbMatrix([[0.5, 0.5]]), -69.31, 100
        )
        assert bic(data, two) - bic(data, one) == pytest.approx(2 * np.log(100), abs=1e-10)

    def test_monotone_in_parameter_count(self):
        # Holding ll and N fixed, more parameters means strictly larger BIC.
        y = np.zeros((50, 2), dtype=np.uint8)
        y[::2] = 1
        data = BinaryResponseMatrix(y)
        values = []
        for k in (1, 2, 3):
            model = LcaModel(
                k,
                ClassProportions(np.ones(k) / k),
                ItemProbMatrix(np.full((2, k), 0.5)),
                -42.0,
                50,
            )
            values.append(bic(data, model))
        assert values[0] < values[1] < values[2]


def test_posterior_feeds_pseudo_likelihood_weights(example_truth):
    # Posterior weighted counts are exactly the refinement sufficient stats.
    from sparselca.refine import item_sufficient_stats
    from sparselca.simulate import sample_dataset
    from sparselca._backend import weighted_item_counts

    data = sample_dataset(example_truth, 1000, 21)
    gamma = posterior(data, example_truth).gamma
    assert np.abs(gamma.sum(axis=1) - 1).max() < 1e-10
    s_all, t_all = weighted_item_counts(data.values, gamma)
    for j in (0, 3, 5):
        s, t = item_sufficient_stats(data.values[:, j], gamma)
        assert s == pytest.approx(s_all[j], rel=1e-12)
        assert t == pytest.approx(t_all, rel=1e-12)
