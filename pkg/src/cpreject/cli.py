"""Command-line interface for the experiment harness."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .core import DataFormatError
from .harness import (
    ConfigError,
    ExperimentConfig,
    default_epsilon_grid,
    emit_reports,
    parse_epsilon_grid,
    parse_synthetic_spec,
    run_experiment,
    validate,
)
from .inductive import UnusableCorrectionError

_ERROR_CATEGORIES = (
    (ConfigError, "config"),
    (DataFormatError, "data"),
    (UnusableCorrectionError, "correction"),
)


def _fail(exc: Exception):
    for cls, category in _ERROR_CATEGORIES:
        if isinstance(exc, cls):
            click.echo(f"error[{category}]: {exc}", err=True)
            sys.exit(2)
    raise exc


def _source_options(func):
    func = click.option("--data", "data_path", type=click.Path(path_type=Path), default=None,
                        help="CSV dataset (header row, comma separated).")(func)
    func = click.option("--label-col", "label_column", default=None,
                        help="Name of the binary label column for --data.")(func)
    func = click.option("--synthetic", "synthetic_spec", default=None,
                        help="Synthetic source, e.g. d=2,sep=2.0,prior=0.5.")(func)
    return func


def _common_options(func):
    func = click.option("--epsilon-grid", "grid_spec", default=None,
                        help="Level grid as start:stop:step (default 0.01:0.99:0.01).")(func)
    func = click.option("--runs", type=int, default=None, help="Number of seeded runs.")(func)
    func = click.option("--seed", "master_seed", type=int, default=0, help="Master seed.")(func)
    func = click.option("--standardize", is_flag=True, help="Z-score features using training statistics.")(func)
    func = click.option("--svg", is_flag=True, help="Also draw curves.svg.")(func)
    func = click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("out"),
                        show_default=True, help="Output directory.")(func)
    return func


def _build_config(regime, data_path, label_column, synthetic_spec, grid_spec, **kwargs):
    if data_path is None and synthetic_spec is None:
        synthetic_spec = ""
    synthetic = None if synthetic_spec is None else parse_synthetic_spec(synthetic_spec)
    grid = default_epsilon_grid() if grid_spec is None else parse_epsilon_grid(grid_spec)
    return ExperimentConfig(
        regime=regime,
        synthetic=synthetic,
        data_path=data_path,
        label_column=label_column,
        epsilon_grid=grid,
        **kwargs,
    )


def _run_and_emit(config: ExperimentConfig, out_dir: Path, svg: bool) -> None:
    report = run_experiment(config)
    paths = emit_reports(report, out_dir, svg=svg)
    for kind, path in paths.items():
        click.echo(f"wrote {kind}: {path}")


@click.group()
@click.version_option(package_name="cpreject")
def main():
    """Conformal prediction with a reject option: desk-scale experiments."""


@main.command()
@_source_options
@click.option("--train", "train_size", type=int, default=100, show_default=True,
              help="Initial (frozen) training bag size.")
@click.option("--test", "test_size", type=int, default=200, show_default=True,
              help="Number of user-blind predictions.")
@_common_options
def fcp(data_path, label_column, synthetic_spec, grid_spec, train_size, test_size,
        runs, master_seed, standardize, svg, out_dir):
    """Full conformal prediction, user-blind, label-conditional categories."""
    try:
        config = _build_config(
            "fcp-online", data_path, label_column, synthetic_spec, grid_spec,
            train_size=train_size, test_size=test_size,
            runs=20 if runs is None else runs,
            master_seed=master_seed, standardize=standardize,
        )
        _run_and_emit(config, out_dir, svg)
    except Exception as exc:  # noqa: BLE001 - categorised below
        _fail(exc)


@main.command()
@_source_options
@click.option("--proper-train", "proper_size", type=int, default=500, show_default=True,
              help="Proper training set size.")
@click.option("--calib", "calibration_size", type=int, default=500, show_default=True,
              help="Calibration set size.")
@click.option("--test", "test_size", type=int, default=100, show_default=True)
@click.option("--delta", type=float, default=0.1, show_default=True,
              help="Confidence budget for the training-conditional correction.")
@click.option("--k", "neighbors", type=int, default=5, show_default=True,
              help="Neighbours used by the underlying scorer.")
@_common_options
def icp(data_path, label_column, synthetic_spec, grid_spec, proper_size, calibration_size,
        test_size, delta, neighbors, runs, master_seed, standardize, svg, out_dir):
    """Offline inductive conformal prediction."""
    try:
        config = _build_config(
            "icp-offline", data_path, label_column, synthetic_spec, grid_spec,
            proper_size=proper_size, calibration_size=calibration_size,
            test_size=test_size, delta=delta, neighbors=neighbors,
            runs=100 if runs is None else runs,
            master_seed=master_seed, standardize=standardize,
        )
        _run_and_emit(config, out_dir, svg)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("icp-batch")
@_source_options
@click.option("--proper-train", "proper_size", type=int, default=200, show_default=True,
              help="Initial proper training set size.")
@click.option("--calib", "calibration_size", type=int, default=300, show_default=True,
              help="Calibration set size (held fixed by the default growth).")
@click.option("--batches", type=int, default=10, show_default=True)
@click.option("--batch-size", type=int, default=100, show_default=True)
@click.option("--delta", type=float, default=0.1, show_default=True)
@click.option("--target-epsilon", type=float, default=0.1, show_default=True,
              help="Level the correction schedule targets.")
@click.option("--schedule", type=click.Choice(["fix-delta", "fix-eps", "custom"]),
              default="fix-delta", show_default=True)
@click.option("--custom-delta", type=float, default=None,
              help="Next-batch delta for the custom schedule.")
@click.option("--k", "neighbors", type=int, default=5, show_default=True)
@_common_options
def icp_batch(data_path, label_column, synthetic_spec, grid_spec, proper_size,
              calibration_size, batches, batch_size, delta, target_epsilon, schedule,
              custom_delta, neighbors, runs, master_seed, standardize, svg, out_dir):
    """Batch-updating offline inductive conformal prediction."""
    try:
        config = _build_config(
            "icp-batch", data_path, label_column, synthetic_spec, grid_spec,
            proper_size=proper_size, calibration_size=calibration_size,
            batches=batches, batch_size=batch_size, delta=delta,
            target_epsilon=target_epsilon, schedule=schedule, custom_delta=custom_delta,
            neighbors=neighbors, runs=10 if runs is None else runs,
            master_seed=master_seed, standardize=standardize,
        )
        _run_and_emit(config, out_dir, svg)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("validate")
@click.option("--synthetic", "synthetic_spec", default="",
              help="Synthetic source, e.g. d=2,sep=2.0,prior=0.5.")
@click.option("--trials", type=int, default=2000, show_default=True,
              help="Online trials for the statistical checks.")
@click.option("--seed", "master_seed", type=int, default=42, show_default=True)
@click.option("--unsmoothed", is_flag=True,
              help="Use the deterministic transducer (conservative validity).")
@click.option("--drift", is_flag=True,
              help="Inject covariate drift; the validity check should then fail.")
def validate_cmd(synthetic_spec, trials, master_seed, unsmoothed, drift):
    """Run the statistical validity self-checks on synthetic data."""
    try:
        config = ExperimentConfig(
            regime="fcp-online",
            synthetic=parse_synthetic_spec(synthetic_spec),
            master_seed=master_seed,
        )
        report = validate(config, smoothed=not unsmoothed, drift=drift, trials=trials)
    except Exception as exc:  # noqa: BLE001
        _fail(exc)
    for line in report.lines():
        click.echo(line)
    if not report.passed:
        sys.exit(1)


if __name__ == "__main__":
    main()
