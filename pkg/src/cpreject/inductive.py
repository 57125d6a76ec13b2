"""Inductive conformal prediction.

Covers the offline predictor with a held-out calibration set, the
semi-online variant that pools processed test scores, the
training-conditional significance correction, and the batch-update
scheduler that trades the correction against its confidence budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Example, RandomSource, ScorePool, check_significance_level, stack_examples
from .nonconformity import KnnMarginMeasure, KnnScorer
from .transductive import smoothed_p_from_pool

__all__ = [
    "UnusableCorrectionError",
    "IcpModel",
    "fit_icp",
    "icp_p_value",
    "icp_p_values_block",
    "semi_online_p_value",
    "validity_slack",
    "corrected_epsilon",
    "EpsilonDeltaPolicy",
    "BatchSchedule",
    "next_batch",
]

SCHEDULE_MODES = ("fix-delta", "fix-eps", "custom")


class UnusableCorrectionError(ValueError):
    """The corrected significance level is not positive.

    There is no recourse at the requested (epsilon, delta): grow the
    calibration set or relax the targets.
    """


@dataclass(frozen=True)
class IcpModel:
    """A fitted inductive conformal predictor.

    The scorer is frozen on the proper training split and the calibration
    scores come from the held-out split; refitting the scorer would
    invalidate them, so models are immutable once built.
    """

    scorer: KnnScorer
    calibration: ScorePool
    train_size: int
    proper_size: int

    def __post_init__(self):
        if self.calibration_size < 1:
            raise ValueError("calibration set must hold at least one score")
        if len(self.calibration) != self.calibration_size:
            raise ValueError(
                f"calibration pool holds {len(self.calibration)} scores, "
                f"expected {self.calibration_size}"
            )

    @property
    def calibration_size(self) -> int:
        return self.train_size - self.proper_size


def fit_icp(
    training: Sequence[Example],
    proper_size: int,
    measure: KnnMarginMeasure,
    rng: RandomSource,
) -> IcpModel:
    """Split the training set, fit the scorer, and calibrate.

    The proper-training/calibration division is a fresh seeded shuffle each
    time a model is fitted; the scorer sees only the first ``proper_size``
    post-shuffle examples and the rest are scored with their true labels.
    """
    training = list(training)
    l = len(training)
    if l == 0:
        raise ValueError("training set is empty")
    proper_size = int(proper_size)
    if not 1 <= proper_size < l:
        raise ValueError(f"proper_size must satisfy 1 <= m < l={l}, got {proper_size}")
    perm = rng.permutation(l)
    ordered = [training[i] for i in perm]
    scorer = measure.fit(ordered[:proper_size])
    calib_X, calib_y = stack_examples(ordered[proper_size:])
    scores = scorer.margins_for_labels(calib_X, calib_y)
    return IcpModel(
        scorer=scorer,
        calibration=ScorePool(scores),
        train_size=l,
        proper_size=proper_size,
    )


def icp_p_value(
    model: IcpModel,
    x,
    candidate: int,
    rng: RandomSource | None = None,
    smoothed: bool = False,
) -> float:
    """P-value of a candidate label against the calibration scores.

    Non-smoothed: ``(count_geq + 1) / (h + 1)``. Smoothed: the test score's
    own tie mass joins the tie-break term, which makes the correct-label
    p-value exactly uniform on its lattice.
    """
    alpha = model.scorer.margin(x, candidate)
    if smoothed:
        if rng is None:
            raise ValueError("smoothed p-values need a random source")
        return smoothed_p_from_pool(model.calibration, alpha, rng.uniform())
    h = model.calibration_size
    return (model.calibration.count_geq(alpha) + 1) / (h + 1)


def icp_p_values_block(
    model: IcpModel,
    X: np.ndarray,
    rng: RandomSource | None = None,
    smoothed: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """P-values of both candidate labels for a block of test objects.

    Tie-break draws are consumed in object order, label 0 before label 1.
    Returns ``(p0, p1, tau0, tau1)`` arrays.
    """
    X = np.asarray(X, dtype=np.float64)
    t = X.shape[0]
    h = model.calibration_size
    if t == 0:
        empty = np.empty(0)
        return empty, empty.copy(), empty.copy(), empty.copy()
    prob1 = model.scorer.prob1_batch(X)
    alpha0 = prob1  # margin of label 0 is the class-1 probability
    alpha1 = 1.0 - prob1
    if smoothed:
        if rng is None:
            raise ValueError("smoothed p-values need a random source")
        taus = rng.uniforms(2 * t).reshape(t, 2)
    else:
        taus = np.ones((t, 2))
    pool = model.calibration
    p0 = (pool.count_gt(alpha0) + taus[:, 0] * (pool.count_eq(alpha0) + 1)) / (h + 1)
    p1 = (pool.count_gt(alpha1) + taus[:, 1] * (pool.count_eq(alpha1) + 1)) / (h + 1)
    return p0, p1, taus[:, 0].copy(), taus[:, 1].copy()


def semi_online_p_value(
    model: IcpModel,
    extra_scores: ScorePool,
    x,
    candidate: int,
    rng: RandomSource | None = None,
    smoothed: bool = False,
) -> float:
    """P-value against calibration scores pooled with processed test scores.

    ``extra_scores`` holds the true-label scores of previously processed
    test examples; the caller appends each one after its label is revealed.
    The comparison size after ``t`` processed examples is ``h + t + 1``.
    """
    alpha = model.scorer.margin(x, candidate)
    gt = model.calibration.count_gt(alpha) + extra_scores.count_gt(alpha)
    eq = model.calibration.count_eq(alpha) + extra_scores.count_eq(alpha)
    size = model.calibration_size + len(extra_scores) + 1
    if smoothed:
        if rng is None:
            raise ValueError("smoothed p-values need a random source")
        return (gt + rng.uniform() * (eq + 1)) / size
    return (gt + eq + 1) / size


def validity_slack(trial_index: int, train_size: int, proper_size: int) -> float:
    """How far the plain offline predictor's conservative guarantee has
    degraded by a given trial.

    Zero through the end of training, then grows linearly at one
    calibration-set's-worth per calibration-set-size of extra trials.
    """
    if train_size <= proper_size:
        raise ValueError("train_size must exceed proper_size")
    if trial_index <= train_size:
        return 0.0
    return (trial_index - train_size) / (train_size - proper_size)


def corrected_epsilon(epsilon: float, delta: float, calibration_size: int) -> float:
    """Significance level to predict at so the target level holds
    training-conditionally with confidence ``1 - delta``.

    May be non-positive; callers must treat that as unusable rather than
    clamp it (see :class:`EpsilonDeltaPolicy`).
    """
    epsilon = check_significance_level(epsilon)
    delta = check_significance_level(delta, name="delta")
    h = int(calibration_size)
    if h < 1:
        raise ValueError("calibration_size must be at least 1")
    return epsilon - math.sqrt(math.log(1.0 / delta) / (2.0 * h))


@dataclass(frozen=True)
class EpsilonDeltaPolicy:
    """Target significance with a training-conditional confidence budget."""

    epsilon: float
    delta: float
    calibration_size: int

    @property
    def epsilon_tilde(self) -> float:
        return corrected_epsilon(self.epsilon, self.delta, self.calibration_size)

    @property
    def usable(self) -> bool:
        return self.epsilon_tilde > 0.0


@dataclass(frozen=True)
class BatchSchedule:
    """Sizing and correction state for one batch of the update loop.

    ``delta`` is carried in log space: holding the corrected level fixed
    squares delta every time the calibration set doubles, which underflows
    a float to zero within a dozen batches while ``log_delta`` stays exact.
    """

    index: int
    train_size: int
    proper_size: int
    batch_size: int
    epsilon: float
    log_delta: float

    def __post_init__(self):
        if not 1 <= self.proper_size < self.train_size:
            raise ValueError(
                f"sizes must satisfy 1 <= proper < train, got "
                f"proper={self.proper_size}, train={self.train_size}"
            )
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.log_delta < 0.0:
            raise ValueError("log_delta must be negative (delta in (0, 1))")
        check_significance_level(self.epsilon)

    @classmethod
    def initial(
        cls,
        train_size: int,
        proper_size: int,
        batch_size: int,
        epsilon: float,
        delta: float,
    ) -> "BatchSchedule":
        delta = check_significance_level(delta, name="delta")
        return cls(
            index=0,
            train_size=int(train_size),
            proper_size=int(proper_size),
            batch_size=int(batch_size),
            epsilon=float(epsilon),
            log_delta=math.log(delta),
        )

    @property
    def calibration_size(self) -> int:
        return self.train_size - self.proper_size

    @property
    def delta(self) -> float:
        """May underflow to 0.0 for display; comparisons use log_delta."""
        return math.exp(self.log_delta)

    @property
    def epsilon_tilde(self) -> float:
        return self.epsilon - math.sqrt(-self.log_delta / (2.0 * self.calibration_size))

    @property
    def usable(self) -> bool:
        return self.epsilon_tilde > 0.0


def next_batch(
    schedule: BatchSchedule,
    mode: str,
    proper_size: int | None = None,
    batch_size: int | None = None,
    custom_delta: float | None = None,
) -> BatchSchedule:
    """Advance the schedule by one batch of newly revealed examples.

    ``fix-delta`` keeps the confidence budget and lets the corrected level
    rise toward the target as calibration grows. ``fix-eps`` holds the
    corrected level constant by raising delta to the calibration growth
    ratio, so the budget shrinks instead. ``custom`` accepts any delta at
    most that bound, tightening both at once.

    By default all new examples go to proper training and the calibration
    size stays fixed; pass ``proper_size`` to divide them differently.
    """
    if mode not in SCHEDULE_MODES:
        raise ValueError(f"mode must be one of {SCHEDULE_MODES}, got {mode!r}")
    n_new = schedule.batch_size if batch_size is None else int(batch_size)
    if n_new < 1:
        raise ValueError("batch_size must be at least 1")
    train_next = schedule.train_size + n_new
    proper_next = schedule.proper_size + n_new if proper_size is None else int(proper_size)
    if not 1 <= proper_next < train_next:
        raise ValueError(
            f"proper size must satisfy 1 <= m < l={train_next}, got {proper_next}"
        )
    h_next = train_next - proper_next
    ratio = h_next / schedule.calibration_size

    if mode == "fix-delta":
        log_delta_next = schedule.log_delta
    elif mode == "fix-eps":
        log_delta_next = ratio * schedule.log_delta
    else:
        if custom_delta is None:
            raise ValueError("custom mode needs a custom_delta")
        custom_delta = check_significance_level(custom_delta, name="custom_delta")
        log_custom = math.log(custom_delta)
        if log_custom > ratio * schedule.log_delta:
            raise ValueError(
                f"custom_delta={custom_delta} exceeds the schedule bound "
                f"delta**(h_next/h) = {math.exp(ratio * schedule.log_delta):.6g}"
            )
        log_delta_next = log_custom

    return BatchSchedule(
        index=schedule.index + 1,
        train_size=train_next,
        proper_size=proper_next,
        batch_size=n_new,
        epsilon=schedule.epsilon,
        log_delta=log_delta_next,
    )
