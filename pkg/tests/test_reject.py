"""The rejector, singleton error estimators, and curve construction."""

import math

import numpy as np
import pytest

from cpreject import (
    CurveTable,
    NearestNeighborMeasure,
    PValuePair,
    RandomSource,
    SetSizeCounts,
    SigmaEstimate,
    SingletonRateError,
    UnusableCorrectionError,
    acceptance_interval,
    build_curve,
    chow_baseline,
    curve_from_counts,
    generate_synthetic,
    reject_decision,
    run_online,
    sigma_by_category,
    sigma_exact,
    sigma_hat,
    sigma_label_conditional,
    sigma_tilde,
)
from cpreject.reject import RejectOutcome


PAIR = PValuePair(p0=0.7, p1=0.2, tau0=0.0, tau1=0.0)


class TestRejectDecision:
    def test_accepts_singleton(self):
        out = reject_decision(PAIR, 0.5)
        assert out.is_accept and out.label == 0

    def test_rejects_double_as_ambiguity(self):
        out = reject_decision(PAIR, 0.05)
        assert out.kind == "reject_double" and out.is_reject

    def test_rejects_empty_as_novelty(self):
        out = reject_decision(PAIR, 0.75)
        assert out.kind == "reject_empty"

    def test_tied_pair_never_accepts(self):
        tied = PValuePair(p0=0.4, p1=0.4, tau0=0.0, tau1=0.0)
        for eps in (0.1, 0.4, 0.8):
            assert reject_decision(tied, eps).is_reject

    def test_agrees_with_acceptance_interval(self):
        rng = RandomSource(77)
        grid = np.round(np.linspace(0.01, 0.99, 50), 12)
        pairs = [
            PValuePair(p0=float(a), p1=float(b), tau0=0.0, tau1=0.0)
            for a, b in rng.uniforms(400).reshape(200, 2)
        ] + [
            PValuePair(p0=0.5, p1=0.5, tau0=0.0, tau1=0.0),
            PValuePair(p0=1.0, p1=0.0, tau0=0.0, tau1=0.0),
            PValuePair(p0=0.3, p1=0.3000000001, tau0=0.0, tau1=0.0),
        ]
        for pair in pairs:
            low, high = acceptance_interval(pair)
            for eps in grid:
                expected = low <= eps < high
                assert reject_decision(pair, float(eps)).is_accept == expected

    def test_outcome_validation(self):
        with pytest.raises(ValueError):
            RejectOutcome(kind="accept")
        with pytest.raises(ValueError):
            RejectOutcome(kind="reject_empty", label=1)
        with pytest.raises(ValueError):
            RejectOutcome(kind="maybe")


class TestSetSizeCounts:
    def test_partition_enforced(self):
        with pytest.raises(ValueError, match="partition"):
            SetSizeCounts(n=5, empty=1, single=1, double=1, singleton_errors=0)

    def test_singleton_errors_bounded(self):
        with pytest.raises(ValueError, match="exceed"):
            SetSizeCounts(n=2, empty=0, single=1, double=1, singleton_errors=2)

    def test_from_p_values(self):
        p0 = np.array([0.7, 0.1, 0.9, 0.4])
        p1 = np.array([0.2, 0.05, 0.8, 0.9])
        y = np.array([1, 0, 1, 0])
        counts = SetSizeCounts.from_p_values(p0, p1, y, 0.5)
        # sets at 0.5: {0}, {}, {0,1}, {1}
        assert (counts.empty, counts.single, counts.double) == (1, 2, 1)
        # trial 0 excludes the true label 1; trial 3 excludes the true label 0
        assert counts.singleton_errors == 2
        assert counts.total_errors == 3


class TestSigmaExact:
    def test_direct_substitution(self):
        assert sigma_exact(0.1, 0.02, 0.40) == pytest.approx(0.2)

    def test_zero_numerator(self):
        assert sigma_exact(0.1, 0.1, 0.5) == 0.0

    def test_upper_bound(self):
        assert sigma_exact(0.5, 0.2, 0.3) == pytest.approx(1.0)

    def test_violations_reported_distinctly(self):
        with pytest.raises(SingletonRateError, match="positive"):
            sigma_exact(0.1, 0.0, 0.0)
        with pytest.raises(SingletonRateError, match="exceeds epsilon"):
            sigma_exact(0.1, 0.2, 0.5)
        with pytest.raises(SingletonRateError, match="p_empty \\+ p_single"):
            sigma_exact(0.9, 0.1, 0.2)


class TestSigmaHat:
    def test_direct_substitution(self):
        counts = SetSizeCounts(n=100, empty=2, single=40, double=58, singleton_errors=0)
        estimate = sigma_hat(counts, 0.1)
        assert estimate.raw == pytest.approx(0.2)
        assert estimate.clamped == pytest.approx(0.2)

    def test_negative_raw_is_kept_and_clamped(self):
        counts = SetSizeCounts(n=100, empty=10, single=40, double=50, singleton_errors=0)
        estimate = sigma_hat(counts, 0.05)
        assert estimate.raw == pytest.approx(-0.125)
        assert estimate.clamped == 0.0

    def test_zero_numerator(self):
        counts = SetSizeCounts(n=100, empty=10, single=40, double=50, singleton_errors=0)
        assert sigma_hat(counts, 0.1).raw == 0.0

    def test_no_singletons_is_undefined(self):
        counts = SetSizeCounts(n=10, empty=4, single=0, double=6, singleton_errors=0)
        assert sigma_hat(counts, 0.1) is None

    def test_raw_above_one_clamps(self):
        counts = SetSizeCounts(n=100, empty=0, single=5, double=95, singleton_errors=0)
        estimate = sigma_hat(counts, 0.9)
        assert estimate.raw == pytest.approx(18.0)
        assert estimate.clamped == 1.0


class TestSigmaByCategory:
    def test_per_category_estimates(self):
        counts = {
            0: SetSizeCounts(n=200, empty=4, single=80, double=116, singleton_errors=0),
            1: SetSizeCounts(n=50, empty=0, single=0, double=50, singleton_errors=0),
        }
        out = sigma_by_category(counts, {0: 0.1, 1: 0.1})
        assert out[0].raw == pytest.approx(0.2)
        assert out[1] is None

    def test_missing_level(self):
        counts = {0: SetSizeCounts(n=1, empty=0, single=1, double=0, singleton_errors=0)}
        with pytest.raises(ValueError, match="category"):
            sigma_by_category(counts, {})

    def test_label_conditional_conservative(self):
        assert sigma_label_conditional(0.1, singleton_rate=0.5) == pytest.approx(0.2)

    def test_label_conditional_with_training_frequency(self):
        assert sigma_label_conditional(0.1, 0.5, empty_rate=0.05) == pytest.approx(0.1)

    def test_label_conditional_validation(self):
        with pytest.raises(SingletonRateError):
            sigma_label_conditional(0.1, 0.0)


class TestSigmaTilde:
    def test_reference_value(self):
        counts = SetSizeCounts(n=1000, empty=10, single=400, double=590, singleton_errors=0)
        estimate = sigma_tilde(0.1, 0.05, 500, counts)
        assert estimate.raw == pytest.approx(0.08817, abs=1e-4)

    def test_zero_numerator(self):
        # corrected level: 0.1 - sqrt(log(1/delta)/2h) with delta=e^-1.5, h=300 -> 0.05
        delta = math.exp(-1.5)
        counts = SetSizeCounts(n=100, empty=5, single=50, double=45, singleton_errors=0)
        assert sigma_tilde(0.1, delta, 300, counts).raw == pytest.approx(0.0, abs=1e-12)

    def test_batch_sized_tallies(self):
        delta = math.exp(-1.5)
        counts = SetSizeCounts(n=100, empty=1, single=50, double=49, singleton_errors=0)
        assert sigma_tilde(0.1, delta, 300, counts).raw == pytest.approx(0.08, abs=1e-12)

    def test_unusable_correction_raises(self):
        counts = SetSizeCounts(n=10, empty=0, single=5, double=5, singleton_errors=0)
        with pytest.raises(UnusableCorrectionError):
            sigma_tilde(0.05, 0.05, 100, counts)

    def test_no_singletons_is_undefined(self):
        counts = SetSizeCounts(n=10, empty=0, single=0, double=10, singleton_errors=0)
        assert sigma_tilde(0.2, 0.5, 400, counts) is None


class TestBuildCurve:
    def test_partition_identity_per_row(self, mixture_spec):
        stream = generate_synthetic(mixture_spec, 150, RandomSource(60))
        state = run_online(
            stream, np.round(np.linspace(0.05, 0.95, 19), 12),
            NearestNeighborMeasure(), RandomSource(61),
        )
        table = build_curve(state.p0, state.p1, state.true_labels, state.epsilon_grid)
        for row in table:
            assert row.frac_empty + row.frac_single + row.frac_double == pytest.approx(1.0, abs=1e-12)
            assert row.reject_rate == pytest.approx(1.0 - row.frac_single, abs=1e-12)
            assert row.accept_count == row.frac_single * 150

    def test_all_double_row(self):
        p0 = np.array([0.9, 0.8])
        p1 = np.array([0.9, 0.95])
        table = build_curve(p0, p1, np.array([0, 1]), [0.5])
        row = table.rows[0]
        assert row.reject_rate == 1.0
        assert row.singleton_error_empirical is None
        assert row.sigma_hat_raw is None

    def test_rows_follow_grid_order(self):
        p0 = np.array([0.5])
        p1 = np.array([0.1])
        table = build_curve(p0, p1, np.array([0]), [0.2, 0.4, 0.6])
        assert table.column("epsilon") == [0.2, 0.4, 0.6]

    def test_shared_reject_rate_rows_are_kept(self):
        # three predictions engineered so two levels give the same number of
        # singletons but different error tallies:
        # at 0.2 the singletons are rows 0 and 2 (both correct);
        # at 0.5 they are rows 0 and 1 (row 1 excludes its true label)
        p0 = np.array([0.9, 0.7, 0.4])
        p1 = np.array([0.05, 0.3, 0.02])
        y = np.array([0, 1, 0])
        table = build_curve(p0, p1, y, [0.2, 0.5])
        first, second = table.rows
        assert first.accept_count == second.accept_count == 2.0
        assert first.reject_rate == second.reject_rate
        assert first.singleton_error_empirical == 0.0
        assert second.singleton_error_empirical == 0.5

    def test_monotone_fractions(self, mixture_spec):
        stream = generate_synthetic(mixture_spec, 200, RandomSource(62))
        state = run_online(
            stream, np.round(np.linspace(0.02, 0.98, 49), 12),
            NearestNeighborMeasure(), RandomSource(63),
        )
        table = build_curve(state.p0, state.p1, state.true_labels, state.epsilon_grid)
        doubles = table.column("frac_double")
        empties = table.column("frac_empty")
        assert all(b <= a for a, b in zip(doubles, doubles[1:]))
        assert all(b >= a for a, b in zip(empties, empties[1:]))

    def test_empty_log_rows(self):
        table = build_curve(np.empty(0), np.empty(0), np.empty(0, dtype=int), [0.1, 0.5])
        for row in table:
            assert row.frac_single is None
            assert row.accept_count == 0.0

    def test_counts_length_must_match_grid(self):
        counts = [SetSizeCounts(n=0, empty=0, single=0, double=0, singleton_errors=0)]
        with pytest.raises(ValueError):
            curve_from_counts(counts, [0.1, 0.2])

    def test_unknown_column(self):
        table = build_curve(np.empty(0), np.empty(0), np.empty(0, dtype=int), [0.1])
        with pytest.raises(KeyError):
            table.column("nope")


class TestChowBaseline:
    PROB1 = np.array([0.9, 0.4, 0.55, 0.05])
    Y = np.array([1, 0, 1, 1])

    def test_zero_threshold_accepts_everything(self):
        table = chow_baseline(self.PROB1, self.Y, [0.0])
        row = table.rows[0]
        assert row.reject_rate == 0.0
        assert row.accept_count == 4.0
        # predictions: 1, 0, 1, 0 vs truth 1, 0, 1, 1 -> one error
        assert row.singleton_error_empirical == pytest.approx(0.25)

    def test_threshold_above_one_rejects_everything(self):
        table = chow_baseline(self.PROB1, self.Y, [1.01])
        row = table.rows[0]
        assert row.reject_rate == 1.0
        assert row.singleton_error_empirical is None

    def test_direct_rule_application(self):
        table = chow_baseline(np.array([0.9]), np.array([1]), [0.8])
        row = table.rows[0]
        assert row.accept_count == 1.0
        assert row.singleton_error_empirical == 0.0

    def test_rejections_are_ambiguity_only(self):
        table = chow_baseline(self.PROB1, self.Y, [0.6])
        row = table.rows[0]
        assert row.frac_empty == 0.0
        assert row.frac_single + row.frac_double == pytest.approx(1.0)
        assert row.sigma_hat_raw is None and row.sigma_hat_clamped is None

    def test_threshold_order_enforced(self):
        with pytest.raises(ValueError, match="increasing"):
            chow_baseline(self.PROB1, self.Y, [0.9, 0.6])
