"""Smoothed full conformal prediction: transducer, sets, online protocol."""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cpreject import (
    NearestNeighborMeasure,
    PValuePair,
    RandomSource,
    SetSizeCounts,
    acceptance_interval,
    confidence_credibility,
    generate_synthetic,
    prediction_set,
    run_online,
    smoothed_p_values,
)
from cpreject.transductive import deterministic_p_from_scores, smoothed_p_from_scores

from conftest import FixedTau


class TestSmoothedPValue:
    def test_counts_with_tau_zero(self):
        # augmented scores [3, 1, 2] with the candidate scoring 2
        assert smoothed_p_from_scores([3.0, 1.0], 2.0, 0.0) == pytest.approx(1 / 3)

    def test_counts_with_tau_one(self):
        assert smoothed_p_from_scores([3.0, 1.0], 2.0, 1.0) == pytest.approx(2 / 3)

    def test_single_element_pool_returns_tau(self):
        assert smoothed_p_from_scores([], math.inf, 0.37) == 0.37

    def test_deterministic_variant_counts_geq(self):
        assert deterministic_p_from_scores([3.0, 1.0], 2.0) == pytest.approx(2 / 3)

    @given(
        st.lists(st.floats(min_value=0, max_value=10) | st.just(math.inf), max_size=20),
        st.floats(min_value=0, max_value=10) | st.just(math.inf),
        st.floats(min_value=0, max_value=1),
    )
    def test_bounds(self, scores, alpha, tau):
        n = len(scores) + 1
        p = smoothed_p_from_scores(scores, alpha, tau)
        assert tau / n <= p <= 1.0


class TestSmoothedPValues:
    def test_empty_history_returns_draws(self):
        measure = NearestNeighborMeasure()
        pair = smoothed_p_values([], np.array([1.0, 2.0]), measure, FixedTau(0.42))
        assert pair.p0 == 0.42 and pair.p1 == 0.42

    def test_reproducible_from_stream(self, mixture_spec):
        history = generate_synthetic(mixture_spec, 12, RandomSource(3))
        x = np.array([0.5, 0.5])
        measure = NearestNeighborMeasure()
        a = smoothed_p_values(history, x, measure, RandomSource(9, 4))
        b = smoothed_p_values(history, x, measure, RandomSource(9, 4))
        assert a == b

    def test_taus_recorded(self, mixture_spec):
        history = generate_synthetic(mixture_spec, 5, RandomSource(3))
        rng = RandomSource(8, 1)
        expected = (RandomSource(8, 1).uniform(), None)
        pair = smoothed_p_values(history, np.zeros(2), NearestNeighborMeasure(), rng)
        assert pair.tau0 == expected[0]
        assert pair.tau0 != pair.tau1


class TestPredictionSet:
    PAIR = PValuePair(p0=0.7, p1=0.2, tau0=0.5, tau1=0.5)

    def test_singleton(self):
        assert prediction_set(self.PAIR, 0.5).members == {0}

    def test_double(self):
        assert prediction_set(self.PAIR, 0.1).members == {0, 1}

    def test_empty(self):
        assert prediction_set(self.PAIR, 0.8).members == frozenset()

    def test_boundary_excludes(self):
        assert prediction_set(self.PAIR, 0.7).members == frozenset()

    def test_cardinality_monotone_in_level(self):
        sizes = [prediction_set(self.PAIR, e).cardinality for e in (0.1, 0.3, 0.5, 0.75, 0.9)]
        assert sizes == sorted(sizes, reverse=True)

    def test_level_validated(self):
        with pytest.raises(ValueError):
            prediction_set(self.PAIR, 0.0)


class TestConfidenceCredibility:
    def test_basic_pair(self):
        pair = PValuePair(p0=0.7, p1=0.2, tau0=0.0, tau1=0.0)
        confidence, credibility = confidence_credibility(pair)
        assert confidence == pytest.approx(0.8)
        assert credibility == pytest.approx(0.7)
        assert acceptance_interval(pair) == (0.2, 0.7)

    def test_tied_pair_has_empty_interval(self):
        pair = PValuePair(p0=0.5, p1=0.5, tau0=0.0, tau1=0.0)
        low, high = acceptance_interval(pair)
        assert low == high  # no level yields a singleton

    def test_extreme_pair(self):
        pair = PValuePair(p0=1.0, p1=0.0, tau0=0.0, tau1=0.0)
        confidence, credibility = confidence_credibility(pair)
        assert confidence == 1.0 and credibility == 1.0
        assert acceptance_interval(pair) == (0.0, 1.0)


class TestRunOnline:
    GRID = np.array([0.05, 0.1, 0.2, 0.5])

    def test_empty_stream(self):
        state = run_online([], self.GRID, NearestNeighborMeasure(), RandomSource(0))
        assert state.trial_index == 0
        assert state.errors.shape == (0, 4)

    def test_blind_mode_freezes_history(self, mixture_spec):
        initial = generate_synthetic(mixture_spec, 10, RandomSource(1))
        stream = generate_synthetic(mixture_spec, 20, RandomSource(2))
        state = run_online(
            stream, self.GRID, NearestNeighborMeasure(), RandomSource(3), blind=True, initial=initial
        )
        assert state.final_history_size == 10
        assert state.trial_index == 20

    def test_online_mode_grows_history(self, mixture_spec):
        stream = generate_synthetic(mixture_spec, 20, RandomSource(2))
        state = run_online(stream, self.GRID, NearestNeighborMeasure(), RandomSource(3))
        assert state.final_history_size == 20

    def test_single_trial_error_logic(self, mixture_spec):
        stream = generate_synthetic(mixture_spec, 1, RandomSource(5))
        state = run_online(stream, np.array([0.5]), NearestNeighborMeasure(), RandomSource(6))
        assert bool(state.errors[0, 0]) == (state.p_true[0] <= 0.5)

    def test_log_lengths_match_trials(self, mixture_spec):
        stream = generate_synthetic(mixture_spec, 15, RandomSource(7))
        state = run_online(stream, self.GRID, NearestNeighborMeasure(), RandomSource(8))
        assert state.p0.shape == state.p1.shape == state.true_labels.shape == (15,)
        assert state.set_sizes.shape == state.errors.shape == (15, 4)

    def test_nested_sets_across_grid(self, mixture_spec):
        stream = generate_synthetic(mixture_spec, 60, RandomSource(9))
        state = run_online(stream, self.GRID, NearestNeighborMeasure(), RandomSource(10))
        sizes = state.set_sizes
        assert np.all(np.diff(sizes, axis=1) <= 0)

    def test_error_counting_identity(self, mixture_spec):
        stream = generate_synthetic(mixture_spec, 120, RandomSource(11))
        state = run_online(stream, self.GRID, NearestNeighborMeasure(), RandomSource(12))
        for j, eps in enumerate(self.GRID):
            counts = SetSizeCounts.from_p_values(
                state.p0, state.p1, state.true_labels, float(eps)
            )
            assert counts.empty + counts.single + counts.double == counts.n
            assert counts.total_errors == int(state.errors[:, j].sum())

    def test_unsmoothed_mode_pins_draws(self, mixture_spec):
        stream = generate_synthetic(mixture_spec, 10, RandomSource(13))
        state = run_online(
            stream, self.GRID, NearestNeighborMeasure(), RandomSource(14), smoothed=False
        )
        assert np.all(state.tau0 == 1.0) and np.all(state.tau1 == 1.0)

    def test_unsmoothed_p_at_least_smoothed(self, mixture_spec):
        stream = generate_synthetic(mixture_spec, 30, RandomSource(15))
        smooth = run_online(stream, self.GRID, NearestNeighborMeasure(), RandomSource(16))
        hard = run_online(
            stream, self.GRID, NearestNeighborMeasure(), RandomSource(16), smoothed=False
        )
        assert np.all(hard.p0 >= smooth.p0) and np.all(hard.p1 >= smooth.p1)

    def test_grid_validation(self, mixture_spec):
        stream = generate_synthetic(mixture_spec, 2, RandomSource(17))
        with pytest.raises(ValueError):
            run_online(stream, [0.5, 0.1], NearestNeighborMeasure(), RandomSource(18))
