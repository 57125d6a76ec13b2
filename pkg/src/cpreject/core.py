"""Shared domain types: examples, bags, score pools, seeded randomness,
and the two data sources (synthetic Gaussian mixtures and CSV files).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "DataFormatError",
    "MissingColumnError",
    "LabelCardinalityError",
    "FeatureValueError",
    "EmptyDataError",
    "Example",
    "Bag",
    "ScorePool",
    "make_score_pool",
    "PValuePair",
    "RandomSource",
    "GaussianMixtureSpec",
    "generate_synthetic",
    "load_csv",
    "check_significance_level",
    "check_epsilon_grid",
    "stack_examples",
]


class DataFormatError(ValueError):
    """A data file violates the input contract."""


class MissingColumnError(DataFormatError):
    """The requested column is not present in the header."""


class LabelCardinalityError(DataFormatError):
    """The label column does not hold exactly two distinct values."""


class FeatureValueError(DataFormatError):
    """A feature cell is not a finite number."""


class EmptyDataError(DataFormatError):
    """The file has no header or no data rows."""


class Example:
    """A single (object, label) observation with a binary label.

    The object is a vector of finite feature values and the label is 0 or 1.
    Instances are immutable and compare by value, so they can be collected
    into bags (multisets).
    """

    __slots__ = ("object", "label", "_key")

    def __init__(self, obj: Sequence[float] | np.ndarray, label: int):
        arr = np.asarray(obj, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"object must be a 1-d feature vector, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("object contains non-finite feature values")
        if label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {label!r}")
        arr = arr.copy()
        arr.flags.writeable = False
        self.object: np.ndarray = arr
        self.label: int = int(label)
        self._key = (self.label, tuple(arr.tolist()))

    @property
    def key(self) -> tuple:
        """Hashable canonical form, used for bag ordering and equality."""
        return self._key

    def __eq__(self, other) -> bool:
        if not isinstance(other, Example):
            return NotImplemented
        return self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"Example({self.object.tolist()}, label={self.label})"


class Bag:
    """An order-free multiset of examples.

    Two bags holding the same examples in different insertion orders compare
    and hash equal. Iteration follows insertion order, but nothing built on
    bags may depend on it: every downstream score is permutation invariant.
    """

    __slots__ = ("_examples", "_canonical")

    def __init__(self, examples: Iterable[Example] = ()):
        items = tuple(examples)
        for item in items:
            if not isinstance(item, Example):
                raise TypeError(f"bags hold Example instances, got {type(item).__name__}")
        self._examples = items
        self._canonical: tuple | None = None

    def _canonical_keys(self) -> tuple:
        if self._canonical is None:
            self._canonical = tuple(sorted(ex.key for ex in self._examples))
        return self._canonical

    def with_example(self, example: Example) -> "Bag":
        """Return a new bag with one more example."""
        return Bag((*self._examples, example))

    def __len__(self) -> int:
        return len(self._examples)

    def __iter__(self) -> Iterator[Example]:
        return iter(self._examples)

    def __contains__(self, example: Example) -> bool:
        return any(ex == example for ex in self._examples)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Bag):
            return NotImplemented
        return self._canonical_keys() == other._canonical_keys()

    def __hash__(self) -> int:
        return hash(self._canonical_keys())

    def __repr__(self) -> str:
        return f"Bag({len(self._examples)} examples)"


class ScorePool:
    """A multiset of nonconformity scores answering exact rank queries.

    Scores may include +inf (maximally nonconforming); NaN is rejected at
    construction and in queries. Queries accept scalars or arrays and
    satisfy ``count_geq(a) == count_gt(a) + count_eq(a)`` for every ``a``.
    """

    __slots__ = ("_sorted",)

    def __init__(self, scores: Iterable[float]):
        arr = np.asarray(list(scores), dtype=np.float64)
        if arr.ndim != 1:
            arr = arr.ravel()
        if np.isnan(arr).any():
            raise ValueError("scores must not contain NaN")
        self._sorted = np.sort(arr)

    def __len__(self) -> int:
        return self._sorted.size

    @property
    def scores(self) -> np.ndarray:
        """Scores in ascending order (a copy)."""
        return self._sorted.copy()

    @staticmethod
    def _checked(a):
        a = np.asarray(a, dtype=np.float64)
        if np.isnan(a).any():
            raise ValueError("query value must not be NaN")
        return a

    def count_gt(self, a):
        """Number of pool scores strictly greater than ``a``."""
        a = self._checked(a)
        out = self._sorted.size - np.searchsorted(self._sorted, a, side="right")
        return int(out) if np.isscalar(out) or out.ndim == 0 else out

    def count_geq(self, a):
        """Number of pool scores greater than or equal to ``a``."""
        a = self._checked(a)
        out = self._sorted.size - np.searchsorted(self._sorted, a, side="left")
        return int(out) if np.isscalar(out) or out.ndim == 0 else out

    def count_eq(self, a):
        """Number of pool scores exactly equal to ``a``."""
        a = self._checked(a)
        left = np.searchsorted(self._sorted, a, side="left")
        right = np.searchsorted(self._sorted, a, side="right")
        out = right - left
        return int(out) if np.isscalar(out) or out.ndim == 0 else out

    def __repr__(self) -> str:
        return f"ScorePool({self._sorted.size} scores)"


def make_score_pool(scores: Iterable[float]) -> ScorePool:
    """Build a :class:`ScorePool` from any iterable of extended reals."""
    return ScorePool(scores)


@dataclass(frozen=True)
class PValuePair:
    """Smoothed p-values for both candidate labels of one test object.

    ``tau0`` and ``tau1`` are the tie-break draws that produced ``p0`` and
    ``p1``; a pair is reproducible from (scores, draws) alone.
    """

    p0: float
    p1: float
    tau0: float
    tau1: float

    def p_for(self, label: int) -> float:
        if label == 0:
            return self.p0
        if label == 1:
            return self.p1
        raise ValueError(f"label must be 0 or 1, got {label!r}")

    @property
    def largest(self) -> float:
        return max(self.p0, self.p1)

    @property
    def smallest(self) -> float:
        return min(self.p0, self.p1)


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


class RandomSource:
    """Deterministic random stream keyed by ``(master_seed, stream_id)``.

    The pair is hashed into the key of a counter-based generator, so the
    same pair always yields the same draw sequence while distinct stream
    ids behave as independent streams. Instances are single-owner: give
    each run or concurrent task its own stream id instead of sharing one.
    """

    __slots__ = ("master_seed", "stream_id", "_generator")

    def __init__(self, master_seed: int, stream_id: int = 0):
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        a = _splitmix64(self.master_seed & _MASK64)
        b = _splitmix64(a ^ _splitmix64(self.stream_id & _MASK64))
        self._generator = np.random.Generator(np.random.Philox(key=(a << 64) | b))

    def uniform(self) -> float:
        """One draw from U[0, 1)."""
        return float(self._generator.random())

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` draws from U[0, 1)."""
        return self._generator.random(int(n))

    def standard_normal(self, shape) -> np.ndarray:
        return self._generator.standard_normal(shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._generator.permutation(int(n))

    def spawn(self, stream_id: int) -> "RandomSource":
        """A fresh stream under the same master seed."""
        return RandomSource(self.master_seed, stream_id)

    def __repr__(self) -> str:
        return f"RandomSource(master_seed={self.master_seed}, stream_id={self.stream_id})"


def check_significance_level(epsilon: float, name: str = "epsilon") -> float:
    """Validate a significance level lies strictly inside (0, 1)."""
    epsilon = float(epsilon)
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"{name} must lie in the open interval (0, 1), got {epsilon}")
    return epsilon


def check_epsilon_grid(grid) -> np.ndarray:
    """Validate a strictly increasing grid of significance levels."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("epsilon grid must be one-dimensional")
    if arr.size and not (np.all(arr > 0.0) and np.all(arr < 1.0)):
        raise ValueError("epsilon grid values must lie in (0, 1)")
    if arr.size > 1 and not np.all(np.diff(arr) > 0):
        raise ValueError("epsilon grid must be strictly increasing")
    return arr


def stack_examples(examples: Sequence[Example]) -> tuple[np.ndarray, np.ndarray]:
    """Stack examples into an (n, d) feature matrix and an (n,) label vector."""
    if not examples:
        return np.empty((0, 0)), np.empty((0,), dtype=np.int64)
    dim = examples[0].object.size
    for ex in examples:
        if ex.object.size != dim:
            raise ValueError("dimension mismatch between example objects")
    X = np.stack([ex.object for ex in examples])
    y = np.asarray([ex.label for ex in examples], dtype=np.int64)
    return X, y


class GaussianMixtureSpec:
    """Two class-conditional Gaussian components plus a class prior.

    Draws are i.i.d., hence exchangeable, which makes streams from this
    generator suitable for exercising the distribution-free validity
    guarantees at desk scale.
    """

    __slots__ = ("mean0", "mean1", "cov0", "cov1", "prior1", "_chol0", "_chol1")

    def __init__(self, mean0, mean1, cov0, cov1, prior1: float):
        self.mean0 = np.asarray(mean0, dtype=np.float64)
        self.mean1 = np.asarray(mean1, dtype=np.float64)
        if self.mean0.ndim != 1 or self.mean0.shape != self.mean1.shape:
            raise ValueError("component means must be 1-d vectors of equal length")
        d = self.mean0.size
        self.cov0 = self._as_covariance(cov0, d, "cov0")
        self.cov1 = self._as_covariance(cov1, d, "cov1")
        prior1 = float(prior1)
        if not 0.0 <= prior1 <= 1.0:
            raise ValueError(f"class prior must lie in [0, 1], got {prior1}")
        self.prior1 = prior1
        self._chol0 = self._cholesky(self.cov0, "cov0")
        self._chol1 = self._cholesky(self.cov1, "cov1")

    @staticmethod
    def _as_covariance(cov, d: int, name: str) -> np.ndarray:
        arr = np.asarray(cov, dtype=np.float64)
        if arr.ndim == 0:
            arr = float(arr) * np.eye(d)
        if arr.shape != (d, d):
            raise ValueError(f"{name} must have shape ({d}, {d}), got {arr.shape}")
        if not np.allclose(arr, arr.T):
            raise ValueError(f"{name} must be symmetric")
        return arr

    @staticmethod
    def _cholesky(cov: np.ndarray, name: str) -> np.ndarray:
        try:
            return np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"{name} is not positive definite") from exc

    @property
    def dim(self) -> int:
        return self.mean0.size

    @classmethod
    def isotropic(cls, dim: int = 2, separation: float = 2.0, prior1: float = 0.5) -> "GaussianMixtureSpec":
        """Unit-covariance components with means ``separation`` apart."""
        mean0 = np.zeros(dim)
        mean1 = np.zeros(dim)
        mean1[0] = float(separation)
        eye = np.eye(dim)
        return cls(mean0, mean1, eye, eye, prior1)

    def __repr__(self) -> str:
        return f"GaussianMixtureSpec(dim={self.dim}, prior1={self.prior1})"


def generate_synthetic(spec: GaussianMixtureSpec, n: int, rng: RandomSource) -> list[Example]:
    """Draw ``n`` i.i.d. examples from a two-component Gaussian mixture.

    Labels come first from the prior, then features from the matching
    component, so the output is a pure function of (spec, n, seed pair).
    """
    n = int(n)
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return []
    labels = (rng.uniforms(n) < spec.prior1).astype(np.int64)
    z = rng.standard_normal((n, spec.dim))
    X = np.where(
        labels[:, None] == 1,
        spec.mean1 + z @ spec._chol1.T,
        spec.mean0 + z @ spec._chol0.T,
    )
    return [Example(X[i], int(labels[i])) for i in range(n)]


def load_csv(path: str | Path, label_column: str) -> list[Example]:
    """Load a binary-label dataset from a headed CSV file.

    Labels are mapped to {0, 1} by ascending lexicographic order of their
    raw values; all remaining columns are parsed as real features in header
    order. The file must be UTF-8, comma-separated, with a ``.`` decimal
    separator.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataError(f"{path}: file is empty") from None
        if label_column not in header:
            raise MissingColumnError(f"{path}: label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)

        raw_labels: list[str] = []
        feature_rows: list[list[float]] = []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}:{row_no}: expected {len(header)} cells, got {len(row)}"
                )
            raw_labels.append(row[label_idx])
            values = []
            for i, cell in enumerate(row):
                if i == label_idx:
                    continue
                try:
                    value = float(cell)
                except ValueError:
                    raise FeatureValueError(
                        f"{path}:{row_no}: non-numeric feature {header[i]!r} = {cell!r}"
                    ) from None
                if not math.isfinite(value):
                    raise FeatureValueError(
                        f"{path}:{row_no}: non-finite feature {header[i]!r} = {cell!r}"
                    )
                values.append(value)
            feature_rows.append(values)

    if not feature_rows:
        raise EmptyDataError(f"{path}: no data rows")
    distinct = sorted(set(raw_labels))
    if len(distinct) != 2:
        raise LabelCardinalityError(
            f"{path}: label cardinality: expected exactly 2 distinct values in "
            f"{label_column!r}, found {len(distinct)} ({distinct[:5]})"
        )
    mapping = {distinct[0]: 0, distinct[1]: 1}
    return [
        Example(features, mapping[raw])
        for features, raw in zip(feature_rows, raw_labels)
    ]
