"""Refinement: pseudo-likelihood, block solutions, stepwise search, EBIC."""

import numpy as np
import pytest

from sparselca import (
    BinaryResponseMatrix,
    ConfigError,
    DegenerateBlockError,
    EbicConfig,
    OrderedPartition,
    block_solution,
    ebic,
    exhaustive_item_oracle,
    pseudo_likelihood,
    refine_item,
    stepwise_search,
)
from sparselca.refine import ItemCandidate, select_level

from conftest import random_posterior


def double_sum_pseudo_ll(y, gamma, beta_j):
    """Direct double-sum oracle for the weighted Bernoulli log-likelihood."""
    total = 0.0
    for i in range(len(y)):
        for k in range(gamma.shape[1]):
            total += gamma[i, k] * (
                y[i] * np.log(beta_j[k]) + (1 - y[i]) * np.log(1 - beta_j[k])
            )
    return total


class TestPseudoLikelihood:
    def test_degenerate_weights_give_plain_bernoulli(self):
        rng = np.random.default_rng(0)
        y = (rng.random(50) < 0.4).astype(np.uint8)
        gamma = np.zeros((50, 3))
        gamma[:, 0] = 1.0
        beta_j = np.array([0.35, 0.6, 0.9])
        expected = np.sum(y * np.log(0.35) + (1 - y) * np.log(0.65))
        assert pseudo_likelihood(y, gamma, beta_j) == pytest.approx(expected, abs=1e-10)

    def test_matches_double_sum_oracle(self):
        rng = np.random.default_rng(1)
        y = (rng.random(40) < 0.5).astype(np.uint8)
        gamma = random_posterior(rng, 40, 4)
        beta_j = rng.uniform(0.1, 0.9, size=4)
        assert pseudo_likelihood(y, gamma, beta_j) == pytest.approx(
            double_sum_pseudo_ll(y, gamma, beta_j), abs=1e-9
        )


class TestBlockSolution:
    def setup_method(self):
        rng = np.random.default_rng(2)
        self.t = rng.uniform(50, 150, size=4)
        self.s = self.t * np.array([0.141, 0.103, 0.083, 0.883])

    def test_singletons_reproduce_per_class_ratios(self):
        order = np.argsort(self.s / self.t)
        cand = block_solution(self.s, self.t, OrderedPartition.singletons(order))
        assert cand.beta == pytest.approx(self.s / self.t, abs=1e-12)
        assert cand.m == 4

    def test_full_pooling_gives_grand_mean(self):
        cand = block_solution(self.s, self.t, OrderedPartition(((2, 1, 0, 3),)))
        assert cand.beta == pytest.approx(
            np.full(4, self.s.sum() / self.t.sum()), abs=1e-12
        )

    def test_pooled_pair_lies_between_members(self):
        # Classes 2,3 (values 0.103, 0.083) pooled; classes 1 and 4 free.
        cand = block_solution(self.s, self.t, OrderedPartition(((1, 2), (0,), (3,))))
        assert cand.beta[1] == cand.beta[2]
        assert 0.083 < cand.beta[1] < 0.103
        assert cand.beta[0] == pytest.approx(0.141, abs=1e-12)
        assert cand.beta[3] == pytest.approx(0.883, abs=1e-12)

    def test_pooled_mean_is_exact_maximizer(self):
        # Hill-climbing over the block value never beats the closed form.
        rng = np.random.default_rng(3)
        y = (rng.random(200) < 0.45).astype(np.uint8)
        gamma = random_posterior(rng, 200, 3)
        from sparselca.refine import item_sufficient_stats

        s, t = item_sufficient_stats(y, gamma)
        part = OrderedPartition(((0, 1), (2,)))
        cand = block_solution(s, t, part)
        for delta in (-1e-3, -1e-5, 1e-5, 1e-3):
            perturbed = cand.beta.copy()
            perturbed[[0, 1]] += delta
            assert pseudo_likelihood(y, gamma, perturbed) <= cand.pseudo_ll + 1e-7

    def test_zero_weight_block_raises(self):
        s = np.array([1.0, 0.0, 3.0])
        t = np.array([10.0, 0.0, 30.0])
        with pytest.raises(DegenerateBlockError) as exc_info:
            block_solution(s, t, OrderedPartition(((1,), (0,), (2,))))
        assert exc_info.value.block_index == 0


class TestStepwiseSearch:
    def test_single_class(self):
        # With K=1 the unrestricted estimate is the item's grand mean and
        # the search returns it as the only candidate.
        rng = np.random.default_rng(4)
        y = (rng.random(30) < 0.3).astype(np.uint8)
        gamma = np.ones((30, 1))
        cands = stepwise_search(y, gamma, np.array([y.mean()]))
        assert len(cands) == 1
        assert cands[0].m == 1
        assert cands[0].beta == pytest.approx([y.mean()], abs=1e-12)

    def test_example_ordering_and_merge_path(self):
        # beta_hat = (0.141, 0.103, 0.083, 0.883): ascending order is
        # classes (3, 2, 1, 4); the 3-level winner merges the two closest
        # blocks {2, 3}, not the far-apart pair {1, 4}.
        rng = np.random.default_rng(5)
        t = rng.uniform(200, 300, size=4)
        beta_hat = np.array([0.141, 0.103, 0.083, 0.883])
        n = 1200
        gamma = np.abs(rng.dirichlet(t, size=n))
        from sparselca.refine import item_sufficient_stats

        # Construct responses so the weighted ratios equal beta_hat exactly:
        # use fractional-free approach via direct sufficient statistics.
        s, t_cols = item_sufficient_stats(np.ones(n, dtype=np.uint8), gamma)
        s = beta_hat * t_cols

        singletons = OrderedPartition.singletons(np.argsort(beta_hat))
        assert singletons.blocks == ((2,), (1,), (0,), (3,))

        merged = [
            block_solution(s, t_cols, OrderedPartition(p))
            for p in [
                (((2, 1), (0,), (3,))),
                (((2,), (1, 0), (3,))),
                (((2,), (1,), (0, 3))),
            ]
        ]
        best = max(merged, key=lambda c: c.pseudo_ll)
        assert best.partition.blocks == ((2, 1), (0,), (3,))

    def test_pseudo_ll_nondecreasing_in_m(self):
        rng = np.random.default_rng(6)
        y = (rng.random(500) < 0.5).astype(np.uint8)
        gamma = random_posterior(rng, 500, 5)
        from sparselca.refine import item_sufficient_stats

        s, t = item_sufficient_stats(y, gamma)
        cands = stepwise_search(y, gamma, s / t)
        assert [c.m for c in cands] == [1, 2, 3, 4, 5]
        for lo, hi in zip(cands, cands[1:]):
            assert hi.pseudo_ll >= lo.pseudo_ll - 1e-9

    def test_block_value_ordering_preserved_along_path(self):
        # With the unrestricted estimate taken from the same posteriors
        # (as in the pipeline), each merge pools adjacent block values, so
        # the ordering survives the whole greedy path.
        rng = np.random.default_rng(7)
        y = (rng.random(400) < 0.5).astype(np.uint8)
        gamma = random_posterior(rng, 400, 6)
        from sparselca.refine import item_sufficient_stats

        s, t = item_sufficient_stats(y, gamma)
        beta_hat = s / t
        for cand in stepwise_search(y, gamma, beta_hat):
            values = cand.block_values()
            assert (np.diff(values) > -1e-12).all()

    def test_merge_value_between_merged_blocks(self):
        # Betweenness holds for any single merge, whatever the inputs.
        rng = np.random.default_rng(77)
        from sparselca.refine import item_sufficient_stats

        for _ in range(20):
            y = (rng.random(200) < rng.uniform(0.2, 0.8)).astype(np.uint8)
            gamma = random_posterior(rng, 200, 4)
            s, t = item_sufficient_stats(y, gamma)
            values = s / t
            order = np.argsort(values)
            b = int(rng.integers(0, 3))
            blocks = tuple((int(c),) for c in order)
            merged = OrderedPartition(
                blocks[:b] + (blocks[b] + blocks[b + 1],) + blocks[b + 2 :]
            )
            cand = block_solution(s, t, merged)
            lo, hi = values[order[b]], values[order[b + 1]]
            assert lo - 1e-12 <= cand.beta[order[b]] <= hi + 1e-12

    def test_greedy_matches_exhaustive_on_separated_instance(self, example_truth):
        from sparselca.model import posterior
        from sparselca.simulate import sample_dataset

        data = sample_dataset(example_truth, 1500, 3)
        gamma = posterior(data, example_truth).gamma
        from sparselca._backend import weighted_item_counts

        s, t = weighted_item_counts(data.values, gamma)
        beta_hat = s / t
        for j in range(6):
            cands = stepwise_search(data.values[:, j], gamma, beta_hat[j])
            for m in range(1, 5):
                oracle = exhaustive_item_oracle(data.values[:, j], gamma, m)
                assert cands[m - 1].pseudo_ll == pytest.approx(
                    oracle.pseudo_ll, abs=1e-7
                ), f"item {j}, m={m}"


class TestEbic:
    def test_printed_fixture_values(self):
        # Q and EBIC pairs reproduced to printed rounding.
        part = OrderedPartition(((0,), (1,), (2,), (3,)))
        cases = [
            (-353.47, 4, 758.54),
            (-353.71, 3, 746.12),
            (-355.60, 2, 736.99),
            (-629.11, 1, 1271.12),
        ]
        for q, m, expected in cases:
            cand = ItemCandidate(
                m,
                OrderedPartition(tuple((c,) for c in range(m)))
                if m < 4
                else part,
                np.linspace(0.1, 0.9, 4)[:m] if m < 4 else np.linspace(0.1, 0.9, 4),
                q,
            )
            assert ebic(cand, 1000, EbicConfig(rho=20.0)) == pytest.approx(
                expected, abs=0.02
            )

    def test_rho_one_recovers_pseudo_bic(self):
        cand = ItemCandidate(2, OrderedPartition(((0,), (1,))), np.array([0.2, 0.6]), -100.0)
        assert ebic(cand, 500, EbicConfig(rho=1.0)) == pytest.approx(
            200.0 + 2 * np.log(500), abs=1e-12
        )

    def test_difference_identity(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            q1, q2 = -rng.uniform(100, 900, size=2)
            m1, m2 = rng.integers(1, 6, size=2)
            n = int(rng.integers(10, 5000))
            rho = float(rng.uniform(1, 300))
            c1 = ItemCandidate(
                int(m1),
                OrderedPartition(tuple((c,) for c in range(int(m1)))),
                np.linspace(0.1, 0.9, int(m1)),
                q1,
            )
            c2 = ItemCandidate(
                int(m2),
                OrderedPartition(tuple((c,) for c in range(int(m2)))),
                np.linspace(0.1, 0.9, int(m2)),
                q2,
            )
            cfg = EbicConfig(rho=rho)
            lhs = ebic(c1, n, cfg) - ebic(c2, n, cfg)
            rhs = -2 * (q1 - q2) + (m1 - m2) * (np.log(n) + 2 * np.log(rho))
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_rho_must_be_at_least_one(self):
        with pytest.raises(ConfigError):
            EbicConfig(rho=0.5)

    def test_selection_monotone_in_rho(self):
        # For fixed candidates the selected m never increases with rho.
        rng = np.random.default_rng(9)
        y = (rng.random(600) < 0.5).astype(np.uint8)
        gamma = random_posterior(rng, 600, 5)
        beta_hat = rng.uniform(0.2, 0.8, size=5)
        cands = stepwise_search(y, gamma, beta_hat)
        previous = None
        for rho in (1.0, 5.0, 20.0, 80.0, 320.0, 5000.0):
            m, _ = select_level(cands, 600, EbicConfig(rho=rho))
            if previous is not None:
                assert m <= previous
            previous = m


class TestRefineItem:
    def test_all_constant_item_selects_one_level(self, example_truth):
        from sparselca.model import posterior
        from sparselca.simulate import sample_dataset

        data = sample_dataset(example_truth, 400, 11)
        values = data.values.copy()
        values[:, 0] = 1
        data = BinaryResponseMatrix(values)
        gamma = posterior(data, example_truth)
        with pytest.warns(RuntimeWarning):
            result = refine_item(0, data, gamma, example_truth.items)
        assert result.selected_m == 1

    def test_trace_shape_and_tie_break(self):
        rng = np.random.default_rng(12)
        y = (rng.random((300, 2)) < 0.5).astype(np.uint8)
        data = BinaryResponseMatrix(y)
        gamma = random_posterior(rng, 300, 3)
        from sparselca import ItemProbMatrix, PosteriorMatrix
        from sparselca._backend import weighted_item_counts

        s, t = weighted_item_counts(y, gamma)
        result = refine_item(
            0, data, PosteriorMatrix(gamma), ItemProbMatrix(s / t)
        )
        assert result.ebic_trace.shape == (3,)
        assert result.selected_m == int(np.argmin(result.ebic_trace)) + 1
        assert result.selected_partition.n_blocks == result.selected_m
        # Candidates expose non-decreasing pseudo-likelihoods.
        plls = [c.pseudo_ll for c in result.candidates]
        assert all(b >= a - 1e-9 for a, b in zip(plls, plls[1:]))


class TestExhaustiveOracle:
    def test_m_equals_k_is_singletons(self):
        rng = np.random.default_rng(13)
        y = (rng.random(100) < 0.5).astype(np.uint8)
        gamma = random_posterior(rng, 100, 3)
        cand = exhaustive_item_oracle(y, gamma, 3)
        assert cand.m == 3
        assert sorted(len(b) for b in cand.partition.blocks) == [1, 1, 1]

    def test_m_one_is_grand_mean(self):
        rng = np.random.default_rng(14)
        y = (rng.random(100) < 0.5).astype(np.uint8)
        gamma = random_posterior(rng, 100, 4)
        cand = exhaustive_item_oracle(y, gamma, 1)
        from sparselca.refine import item_sufficient_stats

        s, t = item_sufficient_stats(y, gamma)
        assert cand.beta == pytest.approx(np.full(4, s.sum() / t.sum()), abs=1e-12)

    def test_two_block_enumeration_matches_stepwise(self, example_truth):
        from sparselca.model import posterior
        from sparselca.simulate import sample_dataset

        data = sample_dataset(example_truth, 1500, 17)
        gamma = posterior(data, example_truth).gamma
        from sparselca._backend import weighted_item_counts

        s, t = weighted_item_counts(data.values, gamma)
        # Item 1 (two true levels {1,2,3} vs {4}): the best 2-block split
        # over all 7 set partitions agrees with the stepwise winner.
        cands = stepwise_search(data.values[:, 0], gamma, s[0] / t)
        oracle = exhaustive_item_oracle(data.values[:, 0], gamma, 2)
        assert sorted(map(sorted, oracle.partition.blocks)) == sorted(
            map(sorted, cands[1].partition.blocks)
        )
        assert sorted(map(sorted, oracle.partition.blocks)) == [[0, 1, 2], [3]]

    def test_k_guard(self):
        rng = np.random.default_rng(15)
        gamma = random_posterior(rng, 10, 11)
        with pytest.raises(ConfigError):
            exhaustive_item_oracle(np.zeros(10, dtype=np.uint8), gamma, 2)
