"""Nonconformity measures.

Two measures are provided: the same-label nearest-neighbour distance used
by the full (transductive) predictor, and a k-NN probability margin used by
the inductive predictors.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

from .core import Bag, Example, stack_examples

__all__ = [
    "euclidean_to_point",
    "NearestNeighborMeasure",
    "NearestNeighborScorer",
    "nn_score",
    "KnnMarginMeasure",
    "KnnScorer",
    "fit_knn_scorer",
    "margin_score",
]


def euclidean_to_point(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Euclidean distances from each row of ``points`` to ``x``.

    Every distance in the package flows through this one expression so that
    incremental and from-scratch scoring paths produce bit-identical floats.
    """
    points = np.asarray(points, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if points.size == 0:
        return np.empty(0)
    if points.shape[1] != x.shape[0]:
        raise ValueError(
            f"dimension mismatch: objects have {points.shape[1]} features, query has {x.shape[0]}"
        )
    return np.sqrt(((points - x) ** 2).sum(axis=1))


class NearestNeighborScorer:
    """Incremental same-label nearest-neighbour scorer.

    Keeps, for every stored example, its distance to the nearest other
    stored example with the same label. Scoring a candidate against the
    augmented bag then costs one distance sweep instead of a full rescore,
    which is what makes long online runs affordable.
    """

    def __init__(self):
        self._X: np.ndarray | None = None
        self._y = np.empty(0, dtype=np.int64)
        self._nn = np.empty(0)
        self._n = 0

    @classmethod
    def from_examples(cls, examples: Iterable[Example]) -> "NearestNeighborScorer":
        scorer = cls()
        for ex in examples:
            scorer.append(ex.object, ex.label)
        return scorer

    def __len__(self) -> int:
        return self._n

    @property
    def labels(self) -> np.ndarray:
        return self._y[: self._n]

    @property
    def own_scores(self) -> np.ndarray:
        """Current same-label nearest-neighbour distance of each stored example."""
        return self._nn[: self._n]

    def _grow(self, dim: int) -> None:
        if self._X is None:
            cap = 16
            self._X = np.empty((cap, dim))
            self._y = np.empty(cap, dtype=np.int64)
            self._nn = np.empty(cap)
        elif self._n == self._X.shape[0]:
            cap = 2 * self._n
            self._X = np.concatenate([self._X, np.empty_like(self._X)])
            self._y = np.concatenate([self._y, np.empty_like(self._y)])
            self._nn = np.concatenate([self._nn, np.empty_like(self._nn)])

    def distances(self, x) -> np.ndarray:
        """Distances from the query object to every stored object."""
        if self._n == 0:
            return np.empty(0)
        return euclidean_to_point(self._X[: self._n], np.asarray(x, dtype=np.float64))

    def candidate_scores(self, x, y: int, dists: np.ndarray | None = None):
        """Scores of all stored examples and of the candidate ``(x, y)``
        under the bag augmented with the candidate.

        Returns ``(scores, alpha)`` where ``scores[i]`` is the i-th stored
        example's score and ``alpha`` the candidate's own score (+inf when
        no stored example shares its label).
        """
        if dists is None:
            dists = self.distances(x)
        scores = self._nn[: self._n].copy()
        same = self._y[: self._n] == y
        if same.any():
            same_dists = dists[same]
            alpha = float(same_dists.min())
            scores[same] = np.minimum(scores[same], same_dists)
        else:
            alpha = math.inf
        return scores, alpha

    def append(self, x, y: int, dists: np.ndarray | None = None) -> None:
        """Add ``(x, y)`` to the bag, updating cached neighbour distances."""
        x = np.asarray(x, dtype=np.float64)
        if dists is None:
            dists = self.distances(x)
        same = self._y[: self._n] == y
        if same.any():
            same_dists = dists[same]
            alpha = float(same_dists.min())
            nn = self._nn[: self._n]
            nn[same] = np.minimum(nn[same], same_dists)
        else:
            alpha = math.inf
        self._grow(x.shape[0])
        if self._X.shape[1] != x.shape[0]:
            raise ValueError(
                f"dimension mismatch: scorer holds {self._X.shape[1]}-feature objects, "
                f"got {x.shape[0]}"
            )
        self._X[self._n] = x
        self._y[self._n] = y
        self._nn[self._n] = alpha
        self._n += 1


class NearestNeighborMeasure:
    """Scores an example by the distance to the nearest *other* same-label
    object in the bag; +inf when the example is alone in its label.

    A small score means the example sits close to its own class. The score
    is invariant to the bag's insertion order.
    """

    def score(self, bag: Bag, target: Example) -> float:
        """Nonconformity of ``target``, which must be a member of ``bag``."""
        if target not in bag:
            raise ValueError("target must be a member of the bag")
        others = []
        skipped_self = False
        for ex in bag:
            if not skipped_self and ex == target:
                skipped_self = True
                continue
            others.append(ex)
        same = [ex.object for ex in others if ex.label == target.label]
        if not same:
            return math.inf
        dists = euclidean_to_point(np.stack(same), target.object)
        return float(dists.min())

    def scorer_from(self, examples: Iterable[Example]) -> NearestNeighborScorer:
        """Build an incremental scorer holding the given examples."""
        return NearestNeighborScorer.from_examples(examples)


def nn_score(bag: Bag, target: Example) -> float:
    """Same-label nearest-neighbour distance of a bag member."""
    return NearestNeighborMeasure().score(bag, target)


class KnnScorer:
    """Frozen k-NN estimator of the class-1 probability.

    Distance ties are broken toward the lower training index, so the fitted
    scorer is a deterministic function of the query object.
    """

    def __init__(self, X: np.ndarray, y: np.ndarray, k: int):
        if X.shape[0] == 0:
            raise ValueError("training set is empty")
        k = int(k)
        if k < 1:
            raise ValueError("k must be at least 1")
        if k > X.shape[0]:
            raise ValueError(f"k={k} exceeds training size {X.shape[0]}")
        self._X = X
        self._y = y.astype(np.float64)
        self.k = k

    @property
    def training_size(self) -> int:
        return self._X.shape[0]

    def prob1(self, x) -> float:
        """Fraction of label-1 examples among the k nearest neighbours."""
        dists = euclidean_to_point(self._X, np.asarray(x, dtype=np.float64))
        order = np.argsort(dists, kind="stable")[: self.k]
        return float(self._y[order].mean())

    def prob1_batch(self, X: np.ndarray, chunk: int = 512) -> np.ndarray:
        """Vectorised :meth:`prob1` over the rows of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[0] == 0:
            return np.empty(0)
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], chunk):
            block = X[start : start + chunk]
            d = np.sqrt(((block[:, None, :] - self._X[None, :, :]) ** 2).sum(axis=2))
            order = np.argsort(d, axis=1, kind="stable")[:, : self.k]
            out[start : start + block.shape[0]] = self._y[order].mean(axis=1)
        return out

    def margin(self, x, candidate: int) -> float:
        """Hinge nonconformity: one minus the candidate label's probability."""
        p1 = self.prob1(x)
        return 1.0 - p1 if candidate == 1 else p1

    def margin_batch(self, X: np.ndarray, candidate: int) -> np.ndarray:
        p1 = self.prob1_batch(X)
        return 1.0 - p1 if candidate == 1 else p1

    def margins_for_labels(self, X: np.ndarray, labels: np.ndarray) -> np.ndarray:
        """Margins of each row against its own label (calibration scoring)."""
        p1 = self.prob1_batch(X)
        return np.where(np.asarray(labels) == 1, 1.0 - p1, p1)


class KnnMarginMeasure:
    """Inductive nonconformity measure: k-NN hinge on the candidate label.

    Larger scores mean stranger examples; the underlying probability model
    is deliberately simple, since inductive validity holds for any frozen
    scorer.
    """

    def __init__(self, k: int = 5):
        if int(k) < 1:
            raise ValueError("k must be at least 1")
        self.k = int(k)

    def fit(self, examples: Sequence[Example]) -> KnnScorer:
        X, y = stack_examples(list(examples))
        return KnnScorer(X, y, self.k)


def fit_knn_scorer(proper_training: Sequence[Example], k: int) -> KnnScorer:
    """Fit the frozen k-NN probability estimator on a proper training set."""
    return KnnMarginMeasure(k).fit(proper_training)


def margin_score(scorer: KnnScorer, x, candidate: int) -> float:
    """Nonconformity of object ``x`` under the candidate label."""
    return scorer.margin(x, candidate)
