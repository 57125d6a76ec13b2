"""Smoothed full conformal prediction in the online protocol.

Includes the smoothed transducer, prediction sets, confidence/credibility,
and the online runner with optional user-blind mode (history frozen at the
initial training bag).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    Bag,
    Example,
    PValuePair,
    RandomSource,
    ScorePool,
    check_epsilon_grid,
    check_significance_level,
)
from .nonconformity import NearestNeighborMeasure

__all__ = [
    "smoothed_p_from_scores",
    "smoothed_p_from_pool",
    "deterministic_p_from_scores",
    "smoothed_p_values",
    "PredictionSet",
    "prediction_set",
    "confidence_credibility",
    "acceptance_interval",
    "OnlineState",
    "run_online",
]


def smoothed_p_from_scores(other_scores, alpha: float, tau: float) -> float:
    """Smoothed rank of ``alpha`` in a pool it tacitly belongs to.

    ``other_scores`` are the augmented bag's scores excluding the test
    example itself. The test score always ties itself, so the tie mass is
    ``count_eq + 1`` and the comparison size is ``len(other_scores) + 1``.
    Passing ``tau=1`` yields the deterministic (non-smoothed) p-value.
    """
    other = np.asarray(other_scores, dtype=np.float64)
    gt = int(np.count_nonzero(other > alpha))
    eq = int(np.count_nonzero(other == alpha))
    return (gt + tau * (eq + 1)) / (other.size + 1)


def smoothed_p_from_pool(pool: ScorePool, alpha: float, tau: float) -> float:
    """Same as :func:`smoothed_p_from_scores` with a prebuilt score pool."""
    gt = pool.count_gt(alpha)
    eq = pool.count_eq(alpha)
    return (gt + tau * (eq + 1)) / (len(pool) + 1)


def deterministic_p_from_scores(other_scores, alpha: float) -> float:
    """Non-smoothed p-value: fraction of scores at least as large."""
    return smoothed_p_from_scores(other_scores, alpha, 1.0)


def smoothed_p_values(
    history: Bag | Sequence[Example],
    x,
    measure: NearestNeighborMeasure,
    rng: RandomSource,
) -> PValuePair:
    """Smoothed p-values of both candidate labels against the history bag.

    For each candidate label the history is augmented with ``(x, label)``,
    every score is taken under the augmented bag, and the candidate's rank
    is smoothed with a fresh independent tie-break draw (label 0 first,
    then label 1). With empty history the pool is the test example alone,
    so each p-value equals its own draw.
    """
    scorer = measure.scorer_from(history)
    dists = scorer.distances(x)
    tau0 = rng.uniform()
    scores0, alpha0 = scorer.candidate_scores(x, 0, dists)
    p0 = smoothed_p_from_scores(scores0, alpha0, tau0)
    tau1 = rng.uniform()
    scores1, alpha1 = scorer.candidate_scores(x, 1, dists)
    p1 = smoothed_p_from_scores(scores1, alpha1, tau1)
    return PValuePair(p0=p0, p1=p1, tau0=tau0, tau1=tau1)


@dataclass(frozen=True)
class PredictionSet:
    """Subset of {0, 1} whose members' p-values exceed the level."""

    members: frozenset
    epsilon: float

    @property
    def cardinality(self) -> int:
        return len(self.members)

    @property
    def is_empty(self) -> bool:
        return not self.members

    @property
    def is_singleton(self) -> bool:
        return len(self.members) == 1

    @property
    def is_double(self) -> bool:
        return len(self.members) == 2


def prediction_set(p: PValuePair, epsilon: float) -> PredictionSet:
    """Labels whose p-value strictly exceeds the significance level.

    The boundary ``p == epsilon`` excludes the label, so a prediction at
    exactly the level counts as an error for that label.
    """
    epsilon = check_significance_level(epsilon)
    members = frozenset(y for y in (0, 1) if p.p_for(y) > epsilon)
    return PredictionSet(members=members, epsilon=epsilon)


def confidence_credibility(p: PValuePair) -> tuple[float, float]:
    """Confidence (one minus the second-largest p-value) and credibility
    (the largest p-value) of the test object."""
    return 1.0 - p.smallest, p.largest


def acceptance_interval(p: PValuePair) -> tuple[float, float]:
    """Half-open interval of levels at which the prediction is a singleton.

    A prediction is accepted iff ``low <= epsilon < high``; equal p-values
    give an empty interval (no level yields a singleton).
    """
    return p.smallest, p.largest


@dataclass
class OnlineState:
    """Complete record of one online prediction run.

    Per-trial p-values and tie-break draws are retained so any level can be
    re-evaluated after the fact; set sizes and error flags are stored on the
    configured grid.
    """

    epsilon_grid: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    tau0: np.ndarray
    tau1: np.ndarray
    true_labels: np.ndarray
    set_sizes: np.ndarray  # (trials, grid) int8
    errors: np.ndarray  # (trials, grid) bool
    blind: bool
    final_history_size: int

    @property
    def trial_index(self) -> int:
        """Number of completed trials."""
        return self.p0.size

    @property
    def p_true(self) -> np.ndarray:
        """Smoothed p-value of the true label at each trial."""
        return np.where(self.true_labels == 1, self.p1, self.p0)

    def total_errors(self) -> np.ndarray:
        """Cumulative error count per grid level after the final trial."""
        return self.errors.sum(axis=0).astype(np.int64)


def run_online(
    stream: Iterable[Example],
    epsilon_grid,
    measure: NearestNeighborMeasure,
    rng: RandomSource,
    blind: bool = False,
    initial: Iterable[Example] = (),
    smoothed: bool = True,
) -> OnlineState:
    """Run the online protocol over a stream of examples.

    Each trial computes both candidate p-values against the current
    history, records the set size and error flag for every grid level, and
    then reveals the true example into the history unless ``blind`` is set,
    in which case the history stays frozen at the ``initial`` training bag.

    With ``smoothed=False`` the deterministic transducer is used (tie-break
    draws pinned to 1); validity is then conservative instead of exact.
    """
    grid = check_epsilon_grid(epsilon_grid)
    scorer = measure.scorer_from(initial)

    p0_log: list[float] = []
    p1_log: list[float] = []
    tau0_log: list[float] = []
    tau1_log: list[float] = []
    label_log: list[int] = []

    for example in stream:
        x = example.object
        dists = scorer.distances(x)
        if smoothed:
            tau0 = rng.uniform()
        else:
            tau0 = 1.0
        scores0, alpha0 = scorer.candidate_scores(x, 0, dists)
        p0 = smoothed_p_from_scores(scores0, alpha0, tau0)
        if smoothed:
            tau1 = rng.uniform()
        else:
            tau1 = 1.0
        scores1, alpha1 = scorer.candidate_scores(x, 1, dists)
        p1 = smoothed_p_from_scores(scores1, alpha1, tau1)

        p0_log.append(p0)
        p1_log.append(p1)
        tau0_log.append(tau0)
        tau1_log.append(tau1)
        label_log.append(example.label)
        if not blind:
            scorer.append(x, example.label, dists)

    p0_arr = np.asarray(p0_log)
    p1_arr = np.asarray(p1_log)
    labels = np.asarray(label_log, dtype=np.int64)
    member0 = p0_arr[:, None] > grid[None, :]
    member1 = p1_arr[:, None] > grid[None, :]
    set_sizes = (member0.astype(np.int8) + member1.astype(np.int8))
    p_true = np.where(labels == 1, p1_arr, p0_arr)
    errors = p_true[:, None] <= grid[None, :]

    return OnlineState(
        epsilon_grid=grid,
        p0=p0_arr,
        p1=p1_arr,
        tau0=np.asarray(tau0_log),
        tau1=np.asarray(tau1_log),
        true_labels=labels,
        set_sizes=set_sizes,
        errors=errors,
        blind=blind,
        final_history_size=len(scorer),
    )
