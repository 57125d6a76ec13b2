"""Experiment harness.

Runs the three prediction regimes at desk scale over synthetic or CSV
data, aggregates curves across seeded runs, emits CSV/JSON/SVG reports,
and hosts the statistical self-check suite.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    DataFormatError,
    Example,
    GaussianMixtureSpec,
    RandomSource,
    check_epsilon_grid,
    check_significance_level,
    generate_synthetic,
    load_csv,
    stack_examples,
)
from .inductive import (
    BatchSchedule,
    IcpModel,
    fit_icp,
    icp_p_values_block,
    next_batch,
)
from .mondrian import blind_label_conditional_p_values
from .nonconformity import KnnMarginMeasure, NearestNeighborMeasure
from .reject import (
    CURVE_COLUMNS,
    CurveRow,
    CurveTable,
    SetSizeCounts,
    build_curve,
    chow_baseline,
    sigma_hat,
)
from .transductive import run_online

__all__ = [
    "ConfigError",
    "REGIMES",
    "default_epsilon_grid",
    "parse_epsilon_grid",
    "parse_synthetic_spec",
    "ExperimentConfig",
    "RunReport",
    "run_fcp",
    "run_icp_offline",
    "run_icp_batch",
    "run_experiment",
    "aggregate_tables",
    "write_curve_csv",
    "read_curve_csv",
    "emit_reports",
    "CheckResult",
    "ValidationReport",
    "validate",
    "apply_covariate_drift",
]

REGIMES = ("fcp-online", "icp-offline", "icp-batch")

_CHOW_THRESHOLDS = np.round(np.linspace(0.5, 1.0, 51), 12)


class ConfigError(ValueError):
    """An experiment configuration is internally inconsistent."""


def default_epsilon_grid() -> np.ndarray:
    """The standard reporting grid: 0.01 through 0.99 in steps of 0.01."""
    return np.round(np.linspace(0.01, 0.99, 99), 12)


def parse_epsilon_grid(text: str) -> np.ndarray:
    """Parse a ``start:stop:step`` grid description."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"epsilon grid must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"epsilon grid must be numeric, got {text!r}") from None
    if step <= 0:
        raise ConfigError("epsilon grid step must be positive")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    if count < 1:
        raise ConfigError(f"epsilon grid {text!r} is empty")
    values = np.round(start + step * np.arange(count), 12)
    try:
        return check_epsilon_grid(values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_synthetic_spec(text: str) -> GaussianMixtureSpec:
    """Parse a compact mixture description like ``d=2,sep=2.0,prior=0.5``."""
    params = {"d": 2.0, "sep": 2.0, "prior": 0.5}
    if text.strip():
        for item in text.split(","):
            if "=" not in item:
                raise ConfigError(f"synthetic spec entries must be key=value, got {item!r}")
            key, _, value = item.partition("=")
            key = key.strip()
            if key not in params:
                raise ConfigError(f"unknown synthetic spec key {key!r} (use d, sep, prior)")
            try:
                params[key] = float(value)
            except ValueError:
                raise ConfigError(f"synthetic spec value for {key!r} must be numeric") from None
    dim = int(params["d"])
    if dim < 1:
        raise ConfigError("synthetic dimension must be at least 1")
    try:
        return GaussianMixtureSpec.isotropic(dim=dim, separation=params["sep"], prior1=params["prior"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@dataclass
class ExperimentConfig:
    """Everything one experiment needs to be reproduced exactly."""

    regime: str
    synthetic: GaussianMixtureSpec | None = None
    data_path: Path | None = None
    label_column: str | None = None
    train_size: int = 100
    proper_size: int = 500
    calibration_size: int = 500
    test_size: int = 100
    batches: int = 10
    batch_size: int = 100
    epsilon_grid: np.ndarray = field(default_factory=default_epsilon_grid)
    delta: float = 0.1
    target_epsilon: float = 0.1
    schedule: str = "fix-delta"
    custom_delta: float | None = None
    runs: int = 20
    master_seed: int = 0
    standardize: bool = False
    neighbors: int = 5

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ConfigError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        if (self.synthetic is None) == (self.data_path is None):
            raise ConfigError("configure exactly one data source (synthetic or data_path)")
        if self.data_path is not None and not self.label_column:
            raise ConfigError("CSV sources need a label_column")
        if self.runs < 1:
            raise ConfigError("runs must be at least 1")
        if self.test_size < 0:
            raise ConfigError("test_size must be non-negative")
        self.epsilon_grid = check_epsilon_grid(self.epsilon_grid)
        try:
            check_significance_level(self.delta, name="delta")
            check_significance_level(self.target_epsilon, name="target_epsilon")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.neighbors < 1:
            raise ConfigError("neighbors must be at least 1")
        if self.regime == "fcp-online":
            if self.train_size < 0:
                raise ConfigError("train_size must be non-negative")
        else:
            if self.proper_size < 1 or self.calibration_size < 1:
                raise ConfigError("icp regimes need proper_size >= 1 and calibration_size >= 1")
            if self.neighbors > self.proper_size:
                raise ConfigError("neighbors cannot exceed the proper training size")
        if self.regime == "icp-batch":
            if self.batches < 1:
                raise ConfigError("batches must be at least 1")
            if self.batch_size < 1:
                raise ConfigError("batch_size must be at least 1")
            if self.schedule not in ("fix-delta", "fix-eps", "custom"):
                raise ConfigError(f"unknown schedule {self.schedule!r}")
            if self.schedule == "custom" and self.custom_delta is None:
                raise ConfigError("custom schedule needs custom_delta")

    @property
    def icp_train_size(self) -> int:
        return self.proper_size + self.calibration_size


@dataclass
class RunReport:
    """Per-run curves plus their cross-run aggregate and quantile bands."""

    config: ExperimentConfig
    per_run: tuple[CurveTable, ...]
    aggregate: CurveTable
    band_low: CurveTable
    band_high: CurveTable
    metadata: dict


def _needed_examples(config: ExperimentConfig) -> int:
    if config.regime == "fcp-online":
        return config.train_size + config.test_size
    if config.regime == "icp-offline":
        return config.icp_train_size + config.test_size
    return config.icp_train_size + config.batches * config.batch_size


def _load_source(config: ExperimentConfig) -> list[Example] | None:
    """Load a CSV source once; synthetic sources are drawn per run."""
    if config.data_path is None:
        return None
    data = load_csv(config.data_path, config.label_column)
    needed = _needed_examples(config)
    if len(data) < needed:
        raise ConfigError(
            f"dataset holds {len(data)} examples but the configured sizes need {needed}"
        )
    return data


def _provision(config: ExperimentConfig, source: list[Example] | None, rng: RandomSource) -> list[Example]:
    """Examples for one run: a fresh synthetic draw, or a fresh shuffle."""
    needed = _needed_examples(config)
    if source is None:
        return generate_synthetic(config.synthetic, needed, rng)
    perm = rng.permutation(len(source))
    return [source[i] for i in perm[:needed]]


def _standardized(train: list[Example], rest: list[Example]) -> tuple[list[Example], list[Example]]:
    """Z-score both blocks using statistics of the training block only."""
    if not train:
        return train, rest
    X, y = stack_examples(train)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0.0] = 1.0

    def transform(examples: list[Example]) -> list[Example]:
        return [Example((ex.object - mean) / std, ex.label) for ex in examples]

    return transform(train), transform(rest)


def _fcp_single_run(config: ExperimentConfig, source, rng: RandomSource) -> CurveTable:
    data = _provision(config, source, rng)
    train = data[: config.train_size]
    test = data[config.train_size : config.train_size + config.test_size]
    if config.standardize:
        train, test = _standardized(train, test)
    test_X, test_y = stack_examples(test)
    if not test:
        empty = np.empty(0)
        return build_curve(empty, empty, np.empty(0, dtype=np.int64), config.epsilon_grid)
    p0, p1, _, _ = blind_label_conditional_p_values(train, test_X, rng)
    return build_curve(p0, p1, test_y, config.epsilon_grid)


def run_fcp(config: ExperimentConfig) -> RunReport:
    """Full conformal prediction, user-blind, label-conditional categories.

    Each run shuffles (or redraws) the data, freezes the training prefix as
    the history bag, and predicts the following test block without ever
    revealing its labels.
    """
    if config.regime != "fcp-online":
        raise ConfigError(f"run_fcp needs regime 'fcp-online', got {config.regime!r}")
    source = _load_source(config)
    tables = []
    for run_index in range(config.runs):
        rng = RandomSource(config.master_seed, run_index)
        tables.append(_fcp_single_run(config, source, rng))
    aggregate, low, high = aggregate_tables(tables)
    metadata = _base_metadata(config)
    return RunReport(
        config=config,
        per_run=tuple(tables),
        aggregate=aggregate,
        band_low=low,
        band_high=high,
        metadata=metadata,
    )


def _icp_predict_block(
    config: ExperimentConfig,
    training: list[Example],
    proper_size: int,
    block: list[Example],
    rng: RandomSource,
) -> tuple[IcpModel, np.ndarray, np.ndarray, np.ndarray]:
    """Fit a fresh model on the training set and predict one test block.

    Shared by the offline and batch regimes so that a one-batch schedule
    consumes the random stream exactly like an offline run.
    """
    measure = KnnMarginMeasure(config.neighbors)
    model = fit_icp(training, proper_size, measure, rng)
    block_X, block_y = stack_examples(block)
    if block:
        p0, p1, _, _ = icp_p_values_block(model, block_X, rng, smoothed=True)
    else:
        p0 = p1 = np.empty(0)
    return model, p0, p1, block_y


def _sigma_tilde_columns(
    config: ExperimentConfig, p0: np.ndarray, p1: np.ndarray, labels: np.ndarray
) -> list[float | None]:
    """Training-conditional bound estimates per grid level for one run.

    Levels whose corrected counterpart is not positive are flagged with
    ``None`` and the run continues.
    """
    h = config.calibration_size
    shift = math.sqrt(math.log(1.0 / config.delta) / (2.0 * h))
    out: list[float | None] = []
    for eps in config.epsilon_grid:
        eps_t = float(eps) - shift
        if eps_t <= 0.0 or p0.size == 0:
            out.append(None)
            continue
        counts = SetSizeCounts.from_p_values(p0, p1, labels, eps_t)
        if counts.single == 0:
            out.append(None)
            continue
        out.append((counts.n * eps_t - counts.empty) / counts.single)
    return out


def run_icp_offline(config: ExperimentConfig) -> RunReport:
    """Offline inductive conformal prediction with smoothed p-values.

    Each run reshuffles, splits off the training block, fits the
    k-NN-margin predictor with a fresh calibration division, and scores the
    test block at every grid level. The report carries the
    training-conditional bound estimates and a probability-threshold
    baseline alongside the curve.
    """
    if config.regime != "icp-offline":
        raise ConfigError(f"run_icp_offline needs regime 'icp-offline', got {config.regime!r}")
    source = _load_source(config)
    l = config.icp_train_size
    tables = []
    sigma_tilde_runs: list[list[float | None]] = []
    chow_tables = []
    for run_index in range(config.runs):
        rng = RandomSource(config.master_seed, run_index)
        data = _provision(config, source, rng)
        training = data[:l]
        test = data[l : l + config.test_size]
        if config.standardize:
            training, test = _standardized(training, test)
        model, p0, p1, test_y = _icp_predict_block(
            config, training, config.proper_size, test, rng
        )
        tables.append(build_curve(p0, p1, test_y, config.epsilon_grid))
        sigma_tilde_runs.append(_sigma_tilde_columns(config, p0, p1, test_y))
        if test:
            test_X, _ = stack_examples(test)
            prob1 = model.scorer.prob1_batch(test_X)
            chow_tables.append(chow_baseline(prob1, test_y, _CHOW_THRESHOLDS))
    aggregate, low, high = aggregate_tables(tables)
    metadata = _base_metadata(config)
    metadata["sigma_tilde"] = _sigma_tilde_metadata(config, sigma_tilde_runs)
    if chow_tables:
        chow_mean, _, _ = aggregate_tables(chow_tables)
        metadata["chow_baseline"] = {
            "threshold": chow_mean.column("epsilon"),
            "reject_rate": chow_mean.column("reject_rate"),
            "singleton_error_empirical": chow_mean.column("singleton_error_empirical"),
            "accept_count": chow_mean.column("accept_count"),
        }
    return RunReport(
        config=config,
        per_run=tuple(tables),
        aggregate=aggregate,
        band_low=low,
        band_high=high,
        metadata=metadata,
    )


def run_icp_batch(config: ExperimentConfig) -> RunReport:
    """Batch-updating offline inductive conformal prediction.

    Per batch: divide the current training set randomly into proper
    training and calibration, fit, predict the next block, then reveal the
    block's labels into the training set and advance the correction
    schedule. The per-run curve pools predictions across batches.
    """
    if config.regime != "icp-batch":
        raise ConfigError(f"run_icp_batch needs regime 'icp-batch', got {config.regime!r}")
    source = _load_source(config)
    l0 = config.icp_train_size
    tables = []
    batch_records_runs: list[list[dict]] = []
    for run_index in range(config.runs):
        rng = RandomSource(config.master_seed, run_index)
        data = _provision(config, source, rng)
        if config.standardize:
            head, tail = _standardized(data[:l0], data[l0:])
            data = head + tail
        training = list(data[:l0])
        pointer = l0
        schedule = BatchSchedule.initial(
            train_size=l0,
            proper_size=config.proper_size,
            batch_size=config.batch_size,
            epsilon=config.target_epsilon,
            delta=config.delta,
        )
        all_p0, all_p1, all_y = [], [], []
        records = []
        for k in range(config.batches):
            block = data[pointer : pointer + config.batch_size]
            _, p0, p1, block_y = _icp_predict_block(
                config, training, schedule.proper_size, block, rng
            )
            all_p0.append(p0)
            all_p1.append(p1)
            all_y.append(block_y)
            records.append(_batch_record(schedule, p0, p1, block_y))
            training.extend(block)
            pointer += config.batch_size
            if k < config.batches - 1:
                schedule = next_batch(
                    schedule, config.schedule, custom_delta=config.custom_delta
                )
        p0 = np.concatenate(all_p0) if all_p0 else np.empty(0)
        p1 = np.concatenate(all_p1) if all_p1 else np.empty(0)
        y = np.concatenate(all_y) if all_y else np.empty(0, dtype=np.int64)
        tables.append(build_curve(p0, p1, y, config.epsilon_grid))
        batch_records_runs.append(records)
    aggregate, low, high = aggregate_tables(tables)
    metadata = _base_metadata(config)
    metadata["batches"] = _batch_metadata(batch_records_runs)
    return RunReport(
        config=config,
        per_run=tuple(tables),
        aggregate=aggregate,
        band_low=low,
        band_high=high,
        metadata=metadata,
    )


def run_experiment(config: ExperimentConfig) -> RunReport:
    """Dispatch to the runner matching the configured regime."""
    runner = {
        "fcp-online": run_fcp,
        "icp-offline": run_icp_offline,
        "icp-batch": run_icp_batch,
    }[config.regime]
    return runner(config)


def _batch_record(schedule: BatchSchedule, p0, p1, labels) -> dict:
    eps_t = schedule.epsilon_tilde
    record = {
        "batch": schedule.index,
        "train_size": schedule.train_size,
        "proper_size": schedule.proper_size,
        "calibration_size": schedule.calibration_size,
        "delta": schedule.delta,
        "log_delta": schedule.log_delta,
        "epsilon_tilde": eps_t,
        "usable": schedule.usable,
        "sigma_tilde_raw": None,
    }
    if schedule.usable and np.asarray(p0).size:
        counts = SetSizeCounts.from_p_values(p0, p1, labels, eps_t)
        if counts.single > 0:
            record["sigma_tilde_raw"] = (counts.n * eps_t - counts.empty) / counts.single
    return record


def _batch_metadata(records_runs: list[list[dict]]) -> list[dict]:
    """Per-batch schedule echo with bound estimates averaged across runs.

    Schedule parameters are run-independent; only the estimates vary."""
    out = []
    n_batches = len(records_runs[0]) if records_runs else 0
    for k in range(n_batches):
        base = {
            key: records_runs[0][k][key]
            for key in (
                "batch",
                "train_size",
                "proper_size",
                "calibration_size",
                "delta",
                "log_delta",
                "epsilon_tilde",
                "usable",
            )
        }
        values = [run[k]["sigma_tilde_raw"] for run in records_runs]
        defined = [v for v in values if v is not None]
        base["sigma_tilde_raw_mean"] = sum(defined) / len(defined) if defined else None
        base["sigma_tilde_raw_per_run"] = values
        out.append(base)
    return out


def _sigma_tilde_metadata(
    config: ExperimentConfig, runs: list[list[float | None]]
) -> dict:
    h = config.calibration_size
    shift = math.sqrt(math.log(1.0 / config.delta) / (2.0 * h))
    eps = [float(e) for e in config.epsilon_grid]
    eps_tilde = [e - shift for e in eps]
    usable = [e > 0.0 for e in eps_tilde]
    means: list[float | None] = []
    for j in range(len(eps)):
        defined = [run[j] for run in runs if run[j] is not None]
        means.append(sum(defined) / len(defined) if defined else None)
    return {
        "delta": config.delta,
        "calibration_size": h,
        "epsilon": eps,
        "epsilon_tilde": eps_tilde,
        "usable": usable,
        "sigma_tilde_raw_mean": means,
    }


def _base_metadata(config: ExperimentConfig) -> dict:
    return {
        "regime": config.regime,
        "config": _config_to_dict(config),
        "master_seed": config.master_seed,
        "runs": config.runs,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "aggregation": "mean of per-run curves with empirical 5%/95% bands",
        "run_count_note": (
            "desk-scale defaults use reduced repetition counts; statistical "
            "tolerances widen by the square root of the reduction factor"
        ),
    }


def _config_to_dict(config: ExperimentConfig) -> dict:
    synthetic = None
    if config.synthetic is not None:
        synthetic = {
            "mean0": config.synthetic.mean0.tolist(),
            "mean1": config.synthetic.mean1.tolist(),
            "cov0": config.synthetic.cov0.tolist(),
            "cov1": config.synthetic.cov1.tolist(),
            "prior1": config.synthetic.prior1,
        }
    return {
        "regime": config.regime,
        "synthetic": synthetic,
        "data_path": None if config.data_path is None else str(config.data_path),
        "label_column": config.label_column,
        "train_size": config.train_size,
        "proper_size": config.proper_size,
        "calibration_size": config.calibration_size,
        "test_size": config.test_size,
        "batches": config.batches,
        "batch_size": config.batch_size,
        "epsilon_grid": [float(e) for e in config.epsilon_grid],
        "delta": config.delta,
        "target_epsilon": config.target_epsilon,
        "schedule": config.schedule,
        "custom_delta": config.custom_delta,
        "runs": config.runs,
        "master_seed": config.master_seed,
        "standardize": config.standardize,
        "neighbors": config.neighbors,
    }


def aggregate_tables(
    tables: Sequence[CurveTable],
) -> tuple[CurveTable, CurveTable, CurveTable]:
    """Cell-wise mean and empirical 5%/95% bands across run tables.

    Cells undefined in some runs aggregate over the defined ones; cells
    undefined everywhere stay undefined. Bands are widened to contain the
    mean, so ``low <= mean <= high`` holds per cell by construction.
    """
    if not tables:
        raise ValueError("nothing to aggregate")
    levels = tables[0].column("epsilon")
    for table in tables[1:]:
        if table.column("epsilon") != levels:
            raise ValueError("run tables disagree on the level grid")
    n_rows = len(levels)
    value_columns = [name for name in CURVE_COLUMNS if name != "epsilon"]
    stats: dict[str, tuple[list, list, list]] = {}
    for name in value_columns:
        matrix = np.array(
            [[np.nan if v is None else float(v) for v in t.column(name)] for t in tables]
        )
        means, lows, highs = [], [], []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            col_mean = np.nanmean(matrix, axis=0)
            col_q05 = np.nanquantile(matrix, 0.05, axis=0)
            col_q95 = np.nanquantile(matrix, 0.95, axis=0)
        for j in range(n_rows):
            if np.isnan(col_mean[j]):
                means.append(None)
                lows.append(None)
                highs.append(None)
            else:
                m = float(col_mean[j])
                means.append(m)
                lows.append(min(float(col_q05[j]), m))
                highs.append(max(float(col_q95[j]), m))
        stats[name] = (means, lows, highs)

    def table_from(index: int) -> CurveTable:
        rows = []
        for j in range(n_rows):
            cells = {name: stats[name][index][j] for name in value_columns}
            if cells["accept_count"] is None:
                cells["accept_count"] = 0.0
            rows.append(CurveRow(epsilon=float(levels[j]), **cells))
        return CurveTable(rows=tuple(rows))

    return table_from(0), table_from(1), table_from(2)


def _format_cell(value) -> str:
    if value is None:
        return ""
    return format(float(value), ".17g")


def write_curve_csv(table: CurveTable, path: Path) -> None:
    """Write a curve table with the fixed column contract.

    Reals carry 17 significant digits so a read-back reproduces the table
    exactly; undefined cells are empty.
    """
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(CURVE_COLUMNS)
            for row in table:
                writer.writerow([_format_cell(v) for v in row.astuple()])
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def read_curve_csv(path: Path) -> CurveTable:
    """Read back a curve table written by :func:`write_curve_csv`."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            try:
                header = next(reader)
            except StopIteration:
                raise DataFormatError(f"{path}: file is empty") from None
            if tuple(header) != CURVE_COLUMNS:
                raise DataFormatError(f"{path}: unexpected header {header}")
            rows = []
            for raw in reader:
                if not raw:
                    continue
                if len(raw) != len(CURVE_COLUMNS):
                    raise DataFormatError(f"{path}: malformed row {raw}")
                cells = [None if cell == "" else float(cell) for cell in raw]
                values = dict(zip(CURVE_COLUMNS, cells))
                if values["epsilon"] is None:
                    raise DataFormatError(f"{path}: row without a level value")
                if values["accept_count"] is None:
                    values["accept_count"] = 0.0
                rows.append(CurveRow(**values))
    except OSError as exc:
        raise OSError(f"failed reading {path}: {exc}") from exc
    return CurveTable(rows=tuple(rows))


def emit_reports(report: RunReport, out_dir: Path, svg: bool = False) -> dict[str, Path]:
    """Write ``curves.csv`` (the aggregate mean), ``meta.json``, and
    optionally ``curves.svg`` into the output directory.

    Band tables and regime extras travel in the metadata file; the CSV
    carries exactly the fixed column contract.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"failed creating {out_dir}: {exc}") from exc
    paths: dict[str, Path] = {}

    curves_path = out_dir / "curves.csv"
    write_curve_csv(report.aggregate, curves_path)
    paths["curves"] = curves_path

    meta = dict(report.metadata)
    meta["bands"] = {
        "low": {name: report.band_low.column(name) for name in CURVE_COLUMNS},
        "high": {name: report.band_high.column(name) for name in CURVE_COLUMNS},
    }
    meta_path = out_dir / "meta.json"
    try:
        meta_path.write_text(json.dumps(meta, indent=2, allow_nan=False), encoding="utf-8")
    except OSError as exc:
        raise OSError(f"failed writing {meta_path}: {exc}") from exc
    paths["meta"] = meta_path

    if svg:
        svg_path = out_dir / "curves.svg"
        _write_svg(report, svg_path)
        paths["svg"] = svg_path
    return paths


def _column_as_float(table: CurveTable, name: str) -> np.ndarray:
    return np.array([np.nan if v is None else float(v) for v in table.column(name)])


def _write_svg(report: RunReport, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    table = report.aggregate
    eps = _column_as_float(table, "epsilon")
    frac_e = _column_as_float(table, "frac_empty")
    frac_s = _column_as_float(table, "frac_single")
    frac_d = _column_as_float(table, "frac_double")
    sigma = _column_as_float(table, "sigma_hat_raw")
    err = _column_as_float(table, "singleton_error_empirical")
    rej = _column_as_float(table, "reject_rate")

    fig, (ax_top, ax_bottom) = plt.subplots(2, 1, figsize=(7.0, 8.0))
    defined = ~np.isnan(frac_s)
    if defined.any():
        ax_top.stackplot(
            eps[defined],
            frac_s[defined],
            frac_d[defined],
            frac_e[defined],
            labels=["singleton", "double", "empty"],
            colors=["#5F9ED1", "#ABABAB", "#FF800E"],
            alpha=0.7,
        )
    sigma_defined = ~np.isnan(sigma)
    if sigma_defined.any():
        ax_top.plot(eps[sigma_defined], sigma[sigma_defined], "k-", lw=1.5, label="singleton error estimate")
    ax_top.set_xlabel("significance level")
    ax_top.set_ylabel("fraction")
    ax_top.set_title("prediction set sizes and singleton error estimate")
    ax_top.legend(loc="upper left", fontsize=8)

    curve_defined = ~(np.isnan(err) | np.isnan(rej))
    if curve_defined.any():
        r = rej[curve_defined]
        e = err[curve_defined]
        ax_bottom.plot(r, e, "-", color="#006BA4", lw=1.5)
        if r.size >= 2:
            i0, i1 = int(r.size * 0.25), int(r.size * 0.6)
            if i0 != i1:
                ax_bottom.annotate(
                    "",
                    xy=(r[i1], e[i1]),
                    xytext=(r[i0], e[i0]),
                    arrowprops=dict(arrowstyle="->", color="#C85200", lw=1.5),
                )
                ax_bottom.text(
                    r[i1], e[i1], " level increases", color="#C85200", fontsize=8
                )
    ax_bottom.set_xlabel("reject rate")
    ax_bottom.set_ylabel("error rate among accepted")
    ax_bottom.set_title("error-reject curve")
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc
    finally:
        plt.close(fig)


@dataclass
class CheckResult:
    """Outcome of one self-check, with the measured statistics."""

    name: str
    passed: bool
    detail: str
    skipped: bool = False

    @property
    def status(self) -> str:
        if self.skipped:
            return "SKIP"
        return "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        return f"{self.status} {self.name}: {self.detail}"


@dataclass
class ValidationReport:
    """Results of the statistical self-check suite."""

    checks: list[CheckResult]
    trials: int
    smoothed: bool
    drift: bool

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.skipped)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]


def apply_covariate_drift(examples: list[Example], magnitude: float) -> list[Example]:
    """Shift objects linearly along the first feature over the sequence.

    Destroys exchangeability while keeping labels untouched, which the
    validity checks are expected to detect.
    """
    n = len(examples)
    if n <= 1:
        return list(examples)
    out = []
    for i, ex in enumerate(examples):
        shift = np.zeros_like(ex.object)
        shift[0] = magnitude * i / (n - 1)
        out.append(Example(ex.object + shift, ex.label))
    return out


_VALIDATE_LEVELS = (0.05, 0.1, 0.2)


def validate(
    config: ExperimentConfig,
    smoothed: bool = True,
    drift: bool = False,
    trials: int = 2000,
    min_singletons: int = 100,
) -> ValidationReport:
    """Run the statistical validity suite on a synthetic online stream.

    Checks, in order: error rates against their binomial bands (exact for
    the smoothed transducer, one-sided conservative otherwise), lag-1
    independence of the error sequence, uniformity of the true label's
    p-values, the exact count identities, and the singleton error rate
    against its estimate. Statistical checks that only hold for the
    smoothed transducer are skipped when it is disabled.
    """
    if config.synthetic is None:
        raise ConfigError("validate needs a synthetic source")
    rng = RandomSource(config.master_seed, 0)
    stream = generate_synthetic(config.synthetic, trials, rng)
    if drift:
        stream = apply_covariate_drift(stream, magnitude=8.0)
    state = run_online(
        stream,
        config.epsilon_grid,
        NearestNeighborMeasure(),
        rng,
        blind=False,
        smoothed=smoothed,
    )
    n = state.trial_index
    p_true = state.p_true
    checks: list[CheckResult] = []

    # Error-rate bands at the reference levels.
    mode = "exact" if smoothed else "conservative"
    band_parts = []
    band_ok = True
    for eps in _VALIDATE_LEVELS:
        rate = float(np.count_nonzero(p_true <= eps)) / n
        band = 3.0 * math.sqrt(eps * (1.0 - eps) / n)
        if smoothed:
            ok = abs(rate - eps) <= band
        else:
            ok = rate <= eps + band
        band_ok &= ok
        band_parts.append(f"eps={eps}: rate={rate:.4f} band=+/-{band:.4f}")
    checks.append(
        CheckResult(
            name=f"validity ({mode})",
            passed=band_ok,
            detail="; ".join(band_parts),
        )
    )

    # Lag-1 independence of the error sequence (exact validity only).
    if smoothed:
        auto_parts = []
        auto_ok = True
        bound = 3.0 / math.sqrt(n)
        for eps in _VALIDATE_LEVELS:
            errors = (p_true <= eps).astype(np.float64)
            if errors.std() == 0.0:
                auto_parts.append(f"eps={eps}: degenerate")
                continue
            rho = float(np.corrcoef(errors[:-1], errors[1:])[0, 1])
            auto_ok &= abs(rho) <= bound
            auto_parts.append(f"eps={eps}: rho={rho:+.4f}")
        checks.append(
            CheckResult(
                name="error independence (lag 1)",
                passed=auto_ok,
                detail=f"bound +/-{bound:.4f}; " + "; ".join(auto_parts),
            )
        )
    else:
        checks.append(
            CheckResult(
                name="error independence (lag 1)",
                passed=True,
                skipped=True,
                detail="only guaranteed for the smoothed transducer",
            )
        )

    # Uniformity of the true label's p-values.
    if smoothed:
        from scipy.stats import kstest

        statistic = float(kstest(p_true, "uniform").statistic)
        critical = 1.63 / math.sqrt(n)
        checks.append(
            CheckResult(
                name="p-value uniformity (KS)",
                passed=statistic <= critical,
                detail=f"statistic={statistic:.4f} critical={critical:.4f}",
            )
        )
    else:
        checks.append(
            CheckResult(
                name="p-value uniformity (KS)",
                passed=True,
                skipped=True,
                detail="deterministic p-values are not uniform",
            )
        )

    # Exact count identities over the full grid.
    identity_ok = True
    for j, eps in enumerate(config.epsilon_grid):
        counts = SetSizeCounts.from_p_values(
            state.p0, state.p1, state.true_labels, float(eps)
        )
        errs = int(state.errors[:, j].sum())
        if counts.empty + counts.single + counts.double != counts.n:
            identity_ok = False
        if counts.total_errors != errs:
            identity_ok = False
    checks.append(
        CheckResult(
            name="count identities",
            passed=identity_ok,
            detail=f"checked {config.epsilon_grid.size} grid levels over {n} trials",
        )
    )

    # Singleton error rate against its estimate.
    if smoothed:
        match_parts = []
        match_ok = True
        tested = 0
        for eps in config.epsilon_grid:
            counts = SetSizeCounts.from_p_values(
                state.p0, state.p1, state.true_labels, float(eps)
            )
            if counts.single < min_singletons:
                continue
            estimate = sigma_hat(counts, float(eps))
            empirical = counts.singleton_errors / counts.single
            band = 3.0 * math.sqrt(
                estimate.clamped * (1.0 - estimate.clamped) / counts.single
            )
            tested += 1
            if abs(empirical - estimate.clamped) > band:
                match_ok = False
                match_parts.append(
                    f"eps={float(eps):.2f}: emp={empirical:.4f} "
                    f"est={estimate.clamped:.4f} band={band:.4f}"
                )
        detail = f"{tested} levels with >= {min_singletons} singletons"
        if match_parts:
            detail += "; violations: " + "; ".join(match_parts)
        checks.append(
            CheckResult(name="singleton-rate match", passed=match_ok, detail=detail)
        )
    else:
        checks.append(
            CheckResult(
                name="singleton-rate match",
                passed=True,
                skipped=True,
                detail="estimator guarantee assumes the smoothed transducer",
            )
        )

    return ValidationReport(checks=checks, trials=n, smoothed=smoothed, drift=drift)
