"""The rejector and its error accounting.

A prediction-set classifier becomes a classifier with a reject option by
accepting only singleton sets: empty sets are novelty rejections, full sets
are ambiguity rejections. This module holds the rejector, the singleton
error-rate formulas and estimators in every supported setting, and
error-reject curve construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import PValuePair, check_epsilon_grid, check_significance_level
from .inductive import UnusableCorrectionError, corrected_epsilon

__all__ = [
    "SingletonRateError",
    "RejectOutcome",
    "reject_decision",
    "SetSizeCounts",
    "sigma_exact",
    "SigmaEstimate",
    "sigma_hat",
    "sigma_by_category",
    "sigma_label_conditional",
    "sigma_tilde",
    "CURVE_COLUMNS",
    "CurveRow",
    "CurveTable",
    "build_curve",
    "curve_from_counts",
    "chow_baseline",
]

ACCEPT = "accept"
REJECT_EMPTY = "reject_empty"
REJECT_DOUBLE = "reject_double"


class SingletonRateError(ValueError):
    """Inputs violate the bounds the singleton error rate is proved under.

    Seeing this on real tallies signals a non-exchangeable setup or wrong
    inputs rather than a numerical accident.
    """


@dataclass(frozen=True)
class RejectOutcome:
    """Accept a single label, or abstain.

    ``reject_empty`` flags novelty (no label conforms at the level);
    ``reject_double`` flags ambiguity (both labels conform).
    """

    kind: str
    label: int | None = None

    def __post_init__(self):
        if self.kind not in (ACCEPT, REJECT_EMPTY, REJECT_DOUBLE):
            raise ValueError(f"unknown outcome kind {self.kind!r}")
        if (self.kind == ACCEPT) != (self.label is not None):
            raise ValueError("accept outcomes carry a label; rejections do not")

    @property
    def is_accept(self) -> bool:
        return self.kind == ACCEPT

    @property
    def is_reject(self) -> bool:
        return self.kind != ACCEPT


def reject_decision(p: PValuePair, epsilon: float) -> RejectOutcome:
    """Rejector output for one test object at one significance level.

    Accepts exactly when the prediction set is a singleton, i.e. when the
    level falls in the half-open interval between the two p-values.
    """
    epsilon = check_significance_level(epsilon)
    in0 = p.p0 > epsilon
    in1 = p.p1 > epsilon
    if in0 and in1:
        return RejectOutcome(kind=REJECT_DOUBLE)
    if not in0 and not in1:
        return RejectOutcome(kind=REJECT_EMPTY)
    return RejectOutcome(kind=ACCEPT, label=0 if in0 else 1)


@dataclass(frozen=True)
class SetSizeCounts:
    """Set-size tallies of a prediction log at one significance level."""

    n: int
    empty: int
    single: int
    double: int
    singleton_errors: int

    def __post_init__(self):
        if min(self.n, self.empty, self.single, self.double, self.singleton_errors) < 0:
            raise ValueError("counts must be non-negative")
        if self.empty + self.single + self.double != self.n:
            raise ValueError("set-size counts must partition n")
        if self.singleton_errors > self.single:
            raise ValueError("singleton errors cannot exceed singleton count")

    @property
    def total_errors(self) -> int:
        """Empty sets always err; doubles never do."""
        return self.empty + self.singleton_errors

    @classmethod
    def from_p_values(cls, p0, p1, true_labels, epsilon: float) -> "SetSizeCounts":
        epsilon = check_significance_level(epsilon)
        p0 = np.asarray(p0, dtype=np.float64)
        p1 = np.asarray(p1, dtype=np.float64)
        labels = np.asarray(true_labels)
        in0 = p0 > epsilon
        in1 = p1 > epsilon
        size = in0.astype(np.int8) + in1.astype(np.int8)
        single = size == 1
        p_true = np.where(labels == 1, p1, p0)
        errors = p_true <= epsilon
        return cls(
            n=int(size.size),
            empty=int(np.count_nonzero(size == 0)),
            single=int(np.count_nonzero(single)),
            double=int(np.count_nonzero(size == 2)),
            singleton_errors=int(np.count_nonzero(single & errors)),
        )


def sigma_exact(epsilon: float, p_empty: float, p_single: float) -> float:
    """Exact singleton error probability from the set-size probabilities.

    Requires ``p_single > 0`` and ``p_empty <= epsilon <= p_empty +
    p_single``; under exchangeability both bounds always hold, so each
    violation is reported distinctly.
    """
    epsilon = check_significance_level(epsilon)
    if p_single <= 0.0:
        raise SingletonRateError(f"singleton probability must be positive, got {p_single}")
    if p_empty > epsilon:
        raise SingletonRateError(
            f"empty-set probability {p_empty} exceeds epsilon {epsilon}"
        )
    if epsilon > p_empty + p_single:
        raise SingletonRateError(
            f"epsilon {epsilon} exceeds p_empty + p_single = {p_empty + p_single}"
        )
    return (epsilon - p_empty) / p_single


@dataclass(frozen=True)
class SigmaEstimate:
    """Estimated singleton error rate.

    The raw value may leave [0, 1] at finite sample sizes (it is noisy for
    large levels); the clamped companion is what guarantees compare against.
    Both are always reported.
    """

    raw: float

    @property
    def clamped(self) -> float:
        return min(1.0, max(0.0, self.raw))


def sigma_hat(counts: SetSizeCounts, epsilon: float) -> SigmaEstimate | None:
    """Plug-in estimate of the singleton error rate from one run's tallies.

    Returns ``None`` when there are no singletons (the estimate is
    undefined, not an error).
    """
    epsilon = check_significance_level(epsilon)
    if counts.single == 0:
        return None
    return SigmaEstimate(raw=(counts.n * epsilon - counts.empty) / counts.single)


def sigma_by_category(
    counts_by_category: Mapping,
    epsilon_by_category: Mapping,
) -> dict:
    """Per-category singleton error estimates for a Mondrian predictor.

    Each category uses its own significance level and its own tallies;
    categories without singletons map to ``None``.
    """
    out = {}
    for category, counts in counts_by_category.items():
        if category not in epsilon_by_category:
            raise ValueError(f"no significance level configured for category {category!r}")
        out[category] = sigma_hat(counts, epsilon_by_category[category])
    return out


def sigma_label_conditional(
    epsilon: float,
    singleton_rate: float,
    empty_rate: float = 0.0,
) -> float:
    """Label-conditional singleton error estimate from plug-in rates.

    The empty-set rate within a label category is unobservable at prediction
    time, so the default assumes it is zero, which is conservative; pass an
    ``empty_rate`` measured on the training set for a sharper plug-in.
    """
    epsilon = check_significance_level(epsilon)
    if singleton_rate <= 0.0:
        raise SingletonRateError(
            f"singleton rate must be positive, got {singleton_rate}"
        )
    if empty_rate < 0.0:
        raise SingletonRateError(f"empty rate must be non-negative, got {empty_rate}")
    return (epsilon - empty_rate) / singleton_rate


def sigma_tilde(
    epsilon: float,
    delta: float,
    calibration_size: int,
    counts: SetSizeCounts,
) -> SigmaEstimate | None:
    """Estimate of the training-conditional upper bound on the singleton
    error rate, from tallies taken while predicting at the corrected level.

    Raises :class:`UnusableCorrectionError` when the corrected level is not
    positive; returns ``None`` when there are no singletons.
    """
    eps_tilde = corrected_epsilon(epsilon, delta, calibration_size)
    if eps_tilde <= 0.0:
        raise UnusableCorrectionError(
            f"corrected level {eps_tilde:.6g} is not positive at "
            f"epsilon={epsilon}, delta={delta}, h={calibration_size}"
        )
    if counts.single == 0:
        return None
    return SigmaEstimate(raw=(counts.n * eps_tilde - counts.empty) / counts.single)


CURVE_COLUMNS = (
    "epsilon",
    "frac_empty",
    "frac_single",
    "frac_double",
    "sigma_hat_raw",
    "sigma_hat_clamped",
    "singleton_error_empirical",
    "reject_rate",
    "accept_count",
)


@dataclass(frozen=True)
class CurveRow:
    """One error-reject report row at one level.

    ``None`` cells mean the quantity is undefined at this row (no
    predictions, or no singletons for the error columns).
    """

    epsilon: float
    frac_empty: float | None
    frac_single: float | None
    frac_double: float | None
    sigma_hat_raw: float | None
    sigma_hat_clamped: float | None
    singleton_error_empirical: float | None
    reject_rate: float | None
    accept_count: float

    def astuple(self) -> tuple:
        return tuple(getattr(self, name) for name in CURVE_COLUMNS)


@dataclass(frozen=True)
class CurveTable:
    """Rows of an error-reject experiment, ordered by increasing level.

    The ordering preserves the curve's parameterisation direction. Several
    rows may share a reject rate with different error rates; no
    deduplication is done, and when picking an operating point among such
    rows, choose the smaller level, which carries the lower error rate.
    """

    rows: tuple[CurveRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def column(self, name: str) -> list:
        if name not in CURVE_COLUMNS:
            raise KeyError(f"unknown curve column {name!r}")
        return [getattr(row, name) for row in self.rows]


def curve_from_counts(counts_per_level: Sequence[SetSizeCounts], levels) -> CurveTable:
    """Assemble a curve table from per-level tallies of one prediction log."""
    grid = check_epsilon_grid(levels)
    if len(counts_per_level) != grid.size:
        raise ValueError("one tally per grid level is required")
    rows = []
    for counts, epsilon in zip(counts_per_level, grid):
        epsilon = float(epsilon)
        if counts.n == 0:
            rows.append(
                CurveRow(
                    epsilon=epsilon,
                    frac_empty=None,
                    frac_single=None,
                    frac_double=None,
                    sigma_hat_raw=None,
                    sigma_hat_clamped=None,
                    singleton_error_empirical=None,
                    reject_rate=None,
                    accept_count=0.0,
                )
            )
            continue
        frac_single = counts.single / counts.n
        estimate = sigma_hat(counts, epsilon)
        empirical = (
            counts.singleton_errors / counts.single if counts.single > 0 else None
        )
        rows.append(
            CurveRow(
                epsilon=epsilon,
                frac_empty=counts.empty / counts.n,
                frac_single=frac_single,
                frac_double=counts.double / counts.n,
                sigma_hat_raw=None if estimate is None else estimate.raw,
                sigma_hat_clamped=None if estimate is None else estimate.clamped,
                singleton_error_empirical=empirical,
                reject_rate=1.0 - frac_single,
                accept_count=float(counts.single),
            )
        )
    return CurveTable(rows=tuple(rows))


def build_curve(p0, p1, true_labels, levels) -> CurveTable:
    """Error-reject curve of one prediction log over a level grid."""
    grid = check_epsilon_grid(levels)
    counts = [
        SetSizeCounts.from_p_values(p0, p1, true_labels, float(eps)) for eps in grid
    ]
    return curve_from_counts(counts, grid)


def chow_baseline(prob1, true_labels, thresholds) -> CurveTable:
    """Probability-threshold rejector baseline over a threshold grid.

    Accepts the argmax-probability label when the larger class probability
    reaches the threshold. Rows reuse the curve schema with the threshold in
    the level column and the accepted fraction as the singleton fraction;
    every rejection is an ambiguity rejection (in binary the larger
    probability is never below one half), so the empty fraction is zero.
    No distribution-free rate exists for this rule, so the estimate columns
    stay empty.
    """
    prob1 = np.asarray(prob1, dtype=np.float64)
    labels = np.asarray(true_labels)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.ndim != 1:
        raise ValueError("thresholds must be one-dimensional")
    if thresholds.size > 1 and not np.all(np.diff(thresholds) > 0):
        raise ValueError("thresholds must be strictly increasing")
    n = prob1.size
    top_prob = np.maximum(prob1, 1.0 - prob1)
    predicted = (prob1 >= 0.5).astype(np.int64)
    wrong = predicted != labels
    rows = []
    for t in thresholds:
        t = float(t)
        if n == 0:
            rows.append(
                CurveRow(
                    epsilon=t,
                    frac_empty=None,
                    frac_single=None,
                    frac_double=None,
                    sigma_hat_raw=None,
                    sigma_hat_clamped=None,
                    singleton_error_empirical=None,
                    reject_rate=None,
                    accept_count=0.0,
                )
            )
            continue
        accepted = top_prob >= t
        n_accept = int(np.count_nonzero(accepted))
        frac_accept = n_accept / n
        empirical = (
            float(np.count_nonzero(wrong & accepted)) / n_accept if n_accept else None
        )
        rows.append(
            CurveRow(
                epsilon=t,
                frac_empty=0.0,
                frac_single=frac_accept,
                frac_double=1.0 - frac_accept,
                sigma_hat_raw=None,
                sigma_hat_clamped=None,
                singleton_error_empirical=empirical,
                reject_rate=1.0 - frac_accept,
                accept_count=float(n_accept),
            )
        )
    return CurveTable(rows=tuple(rows))
