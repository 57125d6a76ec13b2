"""Nonconformity measures: same-label nearest neighbour and k-NN margin."""

import itertools
import math

import numpy as np
import pytest

from cpreject import (
    Bag,
    Example,
    NearestNeighborMeasure,
    NearestNeighborScorer,
    RandomSource,
    fit_knn_scorer,
    generate_synthetic,
    margin_score,
    nn_score,
)

from conftest import make_examples


GEOMETRY = make_examples(
    [((0.0, 0.0), 0), ((0.0, 1.0), 0), ((5.0, 0.0), 1), ((0.0, 0.5), 0)]
)


class TestNnScore:
    def test_nearest_same_label_distance(self):
        bag = Bag(GEOMETRY)
        assert nn_score(bag, GEOMETRY[3]) == 0.5

    def test_lone_label_is_infinite(self):
        bag = Bag(GEOMETRY)
        assert nn_score(bag, GEOMETRY[2]) == math.inf

    def test_duplicate_gives_zero(self):
        twin = make_examples([((1.0, 1.0), 0), ((1.0, 1.0), 0)])
        bag = Bag(twin)
        assert nn_score(bag, twin[0]) == 0.0
        assert nn_score(bag, twin[1]) == 0.0

    def test_target_must_be_member(self):
        with pytest.raises(ValueError, match="member"):
            nn_score(Bag(GEOMETRY), Example([9.0, 9.0], 0))

    def test_dimension_mismatch(self):
        bag = Bag(make_examples([((0.0,), 0), ((1.0, 1.0), 0)]))
        with pytest.raises(ValueError, match="dimension"):
            nn_score(bag, Example([0.0], 0))

    def test_permutation_invariance(self):
        examples = make_examples(
            [((0.0, 0.0), 0), ((2.0, 0.0), 0), ((0.0, 3.0), 1), ((1.0, 1.0), 1)]
        )
        reference = [nn_score(Bag(examples), ex) for ex in examples]
        for perm in itertools.permutations(examples):
            assert [nn_score(Bag(perm), ex) for ex in examples] == reference

    def test_zero_iff_same_label_duplicate(self):
        rows = make_examples([((0.0,), 0), ((0.0,), 1), ((1.0,), 0)])
        bag = Bag(rows)
        # same object, different label: not a duplicate for the measure
        assert nn_score(bag, rows[0]) == 1.0
        assert nn_score(bag, rows[1]) == math.inf


class TestNearestNeighborScorer:
    def test_matches_direct_scores(self, mixture_spec):
        examples = generate_synthetic(mixture_spec, 25, RandomSource(11))
        scorer = NearestNeighborScorer.from_examples(examples)
        bag = Bag(examples)
        direct = np.array([nn_score(bag, ex) for ex in examples])
        np.testing.assert_array_equal(scorer.own_scores, direct)

    def test_candidate_scores_match_augmented_bag(self, mixture_spec):
        history = generate_synthetic(mixture_spec, 15, RandomSource(12))
        probe = generate_synthetic(mixture_spec, 1, RandomSource(13))[0]
        scorer = NearestNeighborScorer.from_examples(history)
        for label in (0, 1):
            candidate = Example(probe.object, label)
            augmented = Bag((*history, candidate))
            scores, alpha = scorer.candidate_scores(probe.object, label)
            expected = np.array([nn_score(augmented, ex) for ex in history])
            np.testing.assert_array_equal(scores, expected)
            assert alpha == nn_score(augmented, candidate)

    def test_empty_scorer(self):
        scorer = NearestNeighborScorer()
        scores, alpha = scorer.candidate_scores(np.array([0.0]), 1)
        assert scores.size == 0
        assert alpha == math.inf


class TestKnnScorer:
    def test_nearest_neighbor_label(self):
        scorer = fit_knn_scorer(make_examples([((0.0, 0.0), 0), ((1.0, 1.0), 1)]), k=1)
        assert scorer.prob1([0.1, 0.0]) == 0.0

    def test_all_neighbors_balanced(self):
        training = make_examples(
            [((0.0,), 0), ((1.0,), 1), ((2.0,), 0), ((3.0,), 1)]
        )
        scorer = fit_knn_scorer(training, k=4)
        assert scorer.prob1([10.0]) == 0.5
        assert scorer.prob1([-10.0]) == 0.5

    def test_zero_distance_match(self):
        training = make_examples([((2.0, 2.0), 1), ((5.0, 5.0), 0)])
        scorer = fit_knn_scorer(training, k=1)
        assert scorer.prob1([2.0, 2.0]) == 1.0

    def test_k_exceeds_training_size(self):
        with pytest.raises(ValueError, match="exceeds"):
            fit_knn_scorer(make_examples([((0.0,), 0)]), k=2)

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            fit_knn_scorer(make_examples([((0.0,), 0)]), k=0)

    def test_distance_ties_break_by_lower_index(self):
        # two training points equidistant from the query; index 0 wins
        training = make_examples([((-1.0,), 1), ((1.0,), 0)])
        assert fit_knn_scorer(training, k=1).prob1([0.0]) == 1.0
        flipped = make_examples([((-1.0,), 0), ((1.0,), 1)])
        assert fit_knn_scorer(flipped, k=1).prob1([0.0]) == 0.0

    def test_batch_matches_single(self, mixture_spec):
        training = generate_synthetic(mixture_spec, 40, RandomSource(21))
        queries = generate_synthetic(mixture_spec, 17, RandomSource(22))
        scorer = fit_knn_scorer(training, k=5)
        X = np.stack([q.object for q in queries])
        batch = scorer.prob1_batch(X, chunk=7)
        single = np.array([scorer.prob1(q.object) for q in queries])
        np.testing.assert_allclose(batch, single, rtol=0, atol=0)


class TestMarginScore:
    def test_direct_substitution(self):
        training = make_examples(
            [((0.0,), 1)] * 9 + [((0.0,), 0)]
        )
        scorer = fit_knn_scorer(training, k=10)
        assert margin_score(scorer, [0.0], 1) == pytest.approx(0.1)
        assert margin_score(scorer, [0.0], 0) == pytest.approx(0.9)

    def test_antisymmetry(self, mixture_spec):
        training = generate_synthetic(mixture_spec, 30, RandomSource(31))
        queries = generate_synthetic(mixture_spec, 20, RandomSource(32))
        scorer = fit_knn_scorer(training, k=7)
        for q in queries:
            assert margin_score(scorer, q.object, 0) + margin_score(scorer, q.object, 1) == 1.0

    def test_balanced_probability_is_symmetric(self):
        training = make_examples([((0.0,), 0), ((0.0,), 1)])
        scorer = fit_knn_scorer(training, k=2)
        assert margin_score(scorer, [0.0], 0) == margin_score(scorer, [0.0], 1) == 0.5
