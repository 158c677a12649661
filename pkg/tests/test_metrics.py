"""Ranking and correlation metrics with explicit tie semantics."""

import random

import pytest

from factscan import (
    ConstantInput,
    DegenerateLabels,
    MetricResult,
    auc_pr,
    average_ranks,
    pearson,
    random_baseline,
    spearman,
)


class TestAucPr:
    def test_perfect_ranking(self):
        assert auc_pr([0.9, 0.8, 0.3, 0.1], [True, True, False, False]) == 1.0

    def test_reversed_ranking_step_sum(self):
        # ranked desc: F, F, T, T -> (1/2)(1/3) + (1/2)(2/4) = 5/12
        got = auc_pr([0.1, 0.2, 0.8, 0.9], [True, True, False, False])
        assert abs(got - 5 / 12) < 1e-12

    def test_all_scores_equal_degenerates_to_prevalence(self):
        assert auc_pr([0.5] * 4, [True, False, False, False]) == 1 / 4
        assert auc_pr([0.5] * 4, [True, True, True, False]) == 3 / 4

    def test_tie_block_counts_as_one_step(self):
        # the tied pair contributes a single precision term
        got = auc_pr([0.5, 0.5, 0.1], [True, False, False])
        assert got == 1 / 2

    def test_invariant_under_monotone_transform(self):
        rng = random.Random(7)
        for _ in range(25):
            n = rng.randint(4, 30)
            scores = [rng.choice([0.0, 0.25, 0.5, 0.75, 1.0]) for _ in range(n)]
            labels = [rng.random() < 0.5 for _ in range(n)]
            if not (0 < sum(labels) < n):
                continue
            squared = [s * s for s in scores]
            assert abs(auc_pr(scores, labels) - auc_pr(squared, labels)) < 1e-12

    def test_single_class_labels_rejected(self):
        with pytest.raises(DegenerateLabels):
            auc_pr([0.1, 0.2], [True, True])
        with pytest.raises(DegenerateLabels):
            auc_pr([0.1, 0.2], [False, False])

    def test_empty_rejected(self):
        with pytest.raises(DegenerateLabels):
            auc_pr([], [])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            auc_pr([0.1], [True, False])


class TestPearson:
    def test_exact_linear_relation(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        assert abs(pearson(xs, [2 * x + 1 for x in xs]) - 1.0) < 1e-12

    def test_exact_inverse_relation(self):
        xs = [1.0, 2.0, 3.0]
        assert abs(pearson(xs, [-x for x in xs]) + 1.0) < 1e-12

    def test_hand_value(self):
        # centered products: ((-1)(-1) + 0 + (1)(0)) / sqrt(2 * 0.5... )
        xs = [0.0, 1.0, 2.0]
        ys = [0.0, 1.0, 1.0]
        # sxy = 1, sxx = 2, syy = 2/3 -> r = 1 / sqrt(4/3)
        assert abs(pearson(xs, ys) - 1 / (4 / 3) ** 0.5) < 1e-12

    def test_constant_input_rejected(self):
        with pytest.raises(ConstantInput):
            pearson([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])
        with pytest.raises(ConstantInput):
            pearson([0.0, 1.0, 2.0], [5.0, 5.0, 5.0])

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            pearson([1.0], [1.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            pearson([1.0, 2.0], [1.0])


class TestAverageRanks:
    def test_no_ties(self):
        assert average_ranks([30.0, 10.0, 20.0]) == [3.0, 1.0, 2.0]

    def test_ties_share_mean_rank(self):
        assert average_ranks([10.0, 20.0, 20.0, 30.0]) == [1.0, 2.5, 2.5, 4.0]

    def test_all_equal(self):
        assert average_ranks([5.0, 5.0, 5.0]) == [2.0, 2.0, 2.0]

    def test_empty(self):
        assert average_ranks([]) == []


class TestSpearman:
    def test_monotone_nonlinear_is_one(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        assert abs(spearman(xs, [x**3 for x in xs]) - 1.0) < 1e-12

    def test_reversed_is_minus_one(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        assert abs(spearman(xs, list(reversed(xs))) + 1.0) < 1e-12

    def test_tie_handling_hand_example(self):
        xs = [1.0, 2.0, 2.0, 3.0]  # ranks 1, 2.5, 2.5, 4
        ys = [1.0, 1.0, 2.0, 3.0]  # ranks 1.5, 1.5, 3, 4
        assert abs(spearman(xs, ys) - pearson([1, 2.5, 2.5, 4], [1.5, 1.5, 3, 4])) < 1e-15

    def test_constant_after_ranking_rejected(self):
        with pytest.raises(ConstantInput):
            spearman([1.0, 1.0], [1.0, 2.0])


class TestRandomBaseline:
    def test_seeded_and_reproducible(self):
        assert random_baseline(10, seed=42) == random_baseline(10, seed=42)

    def test_different_seeds_differ(self):
        assert random_baseline(10, seed=1) != random_baseline(10, seed=2)

    def test_range_and_length(self):
        xs = random_baseline(1000, seed=0)
        assert len(xs) == 1000
        assert all(0.0 <= x < 1.0 for x in xs)


class TestMetricResult:
    def test_to_dict(self):
        r = MetricResult(auc_pr=0.5, pearson=None, spearman=None, n=7, n_excluded=1)
        assert r.to_dict() == {
            "auc_pr": 0.5,
            "pearson": None,
            "spearman": None,
            "n": 7,
            "n_excluded": 1,
        }
