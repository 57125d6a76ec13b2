"""Smoothed Mondrian conformal prediction.

P-values are computed within categories assigned by a taxonomy, and
prediction sets may use a different significance level per category. The
nonconformity measure is the underlying measure restricted to each
category's sub-bag.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .core import Bag, Example, PValuePair, RandomSource, check_significance_level, stack_examples
from .nonconformity import NearestNeighborMeasure, euclidean_to_point
from .transductive import PredictionSet, smoothed_p_from_scores

__all__ = [
    "Taxonomy",
    "label_taxonomy",
    "feature_threshold_taxonomy",
    "constant_taxonomy",
    "mondrian_p_value",
    "mondrian_p_values",
    "mondrian_prediction_set",
    "blind_label_conditional_p_values",
]

# A taxonomy maps (trial index, example) to a hashable category. It must be
# total and deterministic; the index starts at 1 for the first bag element.
Taxonomy = Callable[[int, Example], object]


def label_taxonomy(n: int, example: Example):
    """Label-conditional categories: the example's own label."""
    return example.label


def feature_threshold_taxonomy(feature_index: int, threshold: float) -> Taxonomy:
    """Object-conditional categories: one feature above/below a threshold."""

    def categorize(n: int, example: Example):
        return int(example.object[feature_index] > threshold)

    return categorize


def constant_taxonomy(n: int, example: Example):
    """Single global category; reduces Mondrian to plain conformal."""
    return 0


def _category_members(
    history: Sequence[Example], candidate: Example, taxonomy: Taxonomy
) -> tuple[list[Example], object]:
    n = len(history) + 1
    kappa_n = taxonomy(n, candidate)
    members = [z for i, z in enumerate(history, start=1) if taxonomy(i, z) == kappa_n]
    return members, kappa_n


def mondrian_p_value(
    history: Bag | Sequence[Example],
    x,
    candidate_label: int,
    taxonomy: Taxonomy,
    measure: NearestNeighborMeasure,
    rng: RandomSource,
) -> float:
    """Smoothed p-value of one candidate label within its category.

    The comparison pool is the augmented bag restricted to elements sharing
    the candidate's category, scored by the measure on that sub-bag; the
    denominator is the category count. A candidate alone in its category
    gets a p-value equal to its tie-break draw.
    """
    tau = rng.uniform()
    return _mondrian_p(list(history), x, candidate_label, taxonomy, measure, tau)


def _mondrian_p(
    history: list[Example],
    x,
    candidate_label: int,
    taxonomy: Taxonomy,
    measure: NearestNeighborMeasure,
    tau: float,
) -> float:
    candidate = Example(x, candidate_label)
    members, _ = _category_members(history, candidate, taxonomy)
    sub_bag = Bag((*members, candidate))
    member_scores = [measure.score(sub_bag, z) for z in members]
    alpha = measure.score(sub_bag, candidate)
    return smoothed_p_from_scores(member_scores, alpha, tau)


def mondrian_p_values(
    history: Bag | Sequence[Example],
    x,
    taxonomy: Taxonomy,
    measure: NearestNeighborMeasure,
    rng: RandomSource,
) -> PValuePair:
    """Per-category smoothed p-values for both candidate labels.

    Draw order matches the plain transducer (label 0's draw first), so a
    one-category taxonomy reproduces it exactly under a shared stream.
    """
    history = list(history)
    tau0 = rng.uniform()
    p0 = _mondrian_p(history, x, 0, taxonomy, measure, tau0)
    tau1 = rng.uniform()
    p1 = _mondrian_p(history, x, 1, taxonomy, measure, tau1)
    return PValuePair(p0=p0, p1=p1, tau0=tau0, tau1=tau1)


def mondrian_prediction_set(
    p: PValuePair,
    levels: Mapping,
    taxonomy: Taxonomy,
    n: int,
    x,
) -> PredictionSet:
    """Prediction set with per-category significance levels.

    Each candidate label is admitted when its p-value exceeds the level of
    the category the candidate example would fall into. Every encountered
    category must have a level.
    """
    members = set()
    max_level = 0.0
    for y in (0, 1):
        category = taxonomy(n, Example(x, y))
        if category not in levels:
            raise ValueError(f"no significance level configured for category {category!r}")
        level = check_significance_level(levels[category], name=f"levels[{category!r}]")
        max_level = max(max_level, level)
        if p.p_for(y) > level:
            members.add(y)
    return PredictionSet(members=frozenset(members), epsilon=max_level)


def blind_label_conditional_p_values(
    train: Sequence[Example],
    test_objects: np.ndarray,
    rng: RandomSource,
    smoothed: bool = True,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Fast path: label-conditional Mondrian p-values against a frozen bag.

    Equivalent to calling :func:`mondrian_p_values` with ``label_taxonomy``
    and the nearest-neighbour measure for every test object, but each
    training example's within-class neighbour distance is cached once. Used
    by the user-blind experiment regime, where predicting a block never
    reveals true labels into the bag.

    Returns arrays ``(p0, p1, tau0, tau1)`` over the test objects.
    """
    train = list(train)
    X, y = stack_examples(train)
    test_objects = np.asarray(test_objects, dtype=np.float64)

    class_index = {c: np.flatnonzero(y == c) for c in (0, 1)}
    class_points = {c: X[idx] for c, idx in class_index.items()}
    class_nn = {}
    for c, points in class_points.items():
        k = points.shape[0]
        own = np.full(k, np.inf)
        for i in range(k):
            d = euclidean_to_point(points, points[i])
            d[i] = np.inf
            if k > 1:
                own[i] = d.min()
        class_nn[c] = own

    n_test = test_objects.shape[0]
    p0 = np.empty(n_test)
    p1 = np.empty(n_test)
    tau0 = np.empty(n_test)
    tau1 = np.empty(n_test)
    for j in range(n_test):
        x = test_objects[j]
        for c, out_p, out_tau in ((0, p0, tau0), (1, p1, tau1)):
            tau = rng.uniform() if smoothed else 1.0
            points = class_points[c]
            if points.shape[0]:
                dists = euclidean_to_point(points, x)
                alpha = float(dists.min())
                scores = np.minimum(class_nn[c], dists)
            else:
                alpha = np.inf
                scores = np.empty(0)
            out_p[j] = smoothed_p_from_scores(scores, alpha, tau)
            out_tau[j] = tau
    return p0, p1, tau0, tau1
