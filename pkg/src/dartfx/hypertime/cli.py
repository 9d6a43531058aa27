from __future__ import annotations

import logging
import sys
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
import typer

from dartfx.hypertime.builder import build_any
from dartfx.hypertime.dataset import CsvSchema, Dataset, dataset_frame, load_csv
from dartfx.hypertime.evaluation import EVENT_METHODS, compare_events, compare_valued, heatmap_keys, heatmap_rows
from dartfx.hypertime.model import HypertimeModel, RunConfig
from dartfx.hypertime.predict import clamp_range, density, predict_cell_count, predict_mean
from dartfx.hypertime.spectral import ResidualSeries, default_candidates, spectrum
from dartfx.hypertime.synthetic import GENERATORS, folds
from dartfx.hypertime.utils import (
    load_config,
    load_model,
    save_model,
    write_heatmap,
    write_json,
    write_table,
)

app = typer.Typer(help="Dartfx CLI for hypertime spatio-temporal models.")


@app.callback()
def main(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log progress to stderr."),
    debug: bool = typer.Option(False, "--debug", help="Log debugging details to stderr."),
) -> None:
    """
    Dartfx CLI for hypertime spatio-temporal models.
    """
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


ConfigOption = typer.Option(None, "--config", help="key=value file with defaults for these options.")
ColumnsOption = typer.Option(
    None, "--columns", help="Column names of headerless CSV input, comma separated (e.g. t,a,x1)."
)


def _run_config(config: Path | None, **flags: Any) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    values: dict[str, Any] = load_config(config) if config else {}
    values.update({k: v for k, v in flags.items() if v is not None and v != [] and v != ()})
    return RunConfig.model_validate(values)


def _load(path: Path, mode: str | None = None, columns: str | None = None) -> Dataset:
    if columns is None:
        return load_csv(path, CsvSchema(mode=mode))  # type: ignore[arg-type]
    names = [c.strip() for c in columns.split(",") if c.strip()]
    return load_csv(path, CsvSchema(has_header=False, columns=names, mode=mode))  # type: ignore[arg-type]


def _check_targets(paths: list[Path], force: bool) -> None:
    for path in paths:
        if path.exists() and not force:
            raise FileExistsError(f"{path} already exists (use --force to overwrite)")


@app.command()
def train(
    input: Path = typer.Option(..., "--input", "-i", help="Training CSV (t[,a],x1..)."),
    model: Path = typer.Option(..., "--model", "-m", help="Where to write the model JSON."),
    mode: str | None = typer.Option(None, "--mode", help="'valued' or 'event'; inferred from the header by default."),
    backend: str | None = typer.Option(None, "--backend", help="Clustering backend: 'em' or 'km'."),
    clusters: str | None = typer.Option(None, "--clusters", "-k", help="Number of clusters, or 'auto'."),
    max_h: int | None = typer.Option(None, "--max-h", help="Maximum number of hypertime periods."),
    longest_period: float | None = typer.Option(None, "--longest-period", help="Longest candidate period (s)."),
    candidates: int | None = typer.Option(None, "--candidates", help="Number of candidate harmonics."),
    seed: int | None = typer.Option(None, "--seed", help="Random seed (42 by default)."),
    columns: str | None = ColumnsOption,
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite an existing model file."),
    config: Path | None = ConfigOption,
) -> None:
    """
    Build a hypertime model and print its build log.
    """
    try:
        cfg = _run_config(
            config,
            mode=mode,
            backend=backend,
            clusters=clusters,
            max_h=max_h,
            longest_period=longest_period,
            candidates=candidates,
            seed=seed,
        )
        _check_targets([model], force)
        dataset = _load(input, cfg.mode, columns)
        result = build_any(dataset, cfg.build_config())
        save_model(result, model, force=force)
        log = pd.DataFrame(
            [
                {"h": s.h, "error": s.error, "period": s.period, "clusters": s.n_clusters, "accepted": s.accepted}
                for s in result.build_log
            ]
        )
        typer.echo(log.to_csv(index=False, lineterminator="\n"), nl=False)
    except Exception as e:
        typer.echo(f"Error training model: {e}", err=True)
        raise typer.Exit(code=1) from e


def _predictions(model: HypertimeModel, queries: Dataset, cells: tuple[float, float] | None) -> np.ndarray:
    if model.mode == "valued":
        return np.asarray(predict_mean(model, queries.coords, queries.times), dtype=float).reshape(-1)
    if cells is None:
        return np.asarray(density(model, queries.coords, queries.times), dtype=float).reshape(-1)
    spatial, temporal = cells
    return np.array(
        [
            predict_cell_count(model, x, x + spatial, t, t + temporal)
            for x, t in zip(queries.coords, queries.times, strict=True)
        ]
    )


@app.command()
def predict(
    model: Path = typer.Option(..., "--model", "-m", help="Model JSON written by 'train'."),
    input: Path = typer.Option(..., "--input", "-i", help="Query CSV (t,x1..); an 'a' column is ignored."),
    clamp: str | None = typer.Option(None, "--clamp", help="Clamp valued predictions to lo:hi."),
    grid_spatial: float | None = typer.Option(
        None, "--grid-spatial", help="Event models: cell edge; with --grid-temporal, predict counts per cell."
    ),
    grid_temporal: float | None = typer.Option(None, "--grid-temporal", help="Event models: cell duration (s)."),
    columns: str | None = ColumnsOption,
) -> None:
    """
    Write one prediction per query row to standard output.
    """
    try:
        fitted = load_model(model)
        queries = _load(input, columns=columns)
        cells = (grid_spatial, grid_temporal) if grid_spatial and grid_temporal else None
        values = _predictions(fitted, queries, cells)
        bounds = clamp_range(clamp)
        if bounds is not None:
            values = np.clip(values, *bounds)
        frame = pd.DataFrame({"t": queries.times})
        for k in range(queries.spatial_dim):
            frame[f"x{k + 1}"] = queries.coords[:, k]
        frame["prediction"] = values
        typer.echo(frame.to_csv(index=False, lineterminator="\n"), nl=False)
    except Exception as e:
        typer.echo(f"Error predicting: {e}", err=True)
        raise typer.Exit(code=1) from e


@app.command()
def evaluate(
    input: Path = typer.Option(..., "--input", "-i", help="Training CSV."),
    test: list[Path] = typer.Option(..., "--test", "-t", help="Test CSV; repeat for several folds."),
    out_dir: Path = typer.Option(Path("."), "--out-dir", "-o", help="Directory for the report files."),
    mode: str | None = typer.Option(None, "--mode", help="'valued' or 'event'."),
    max_h: int | None = typer.Option(None, "--max-h", help="Maximum number of hypertime periods."),
    longest_period: float | None = typer.Option(None, "--longest-period", help="Longest candidate period (s)."),
    candidates: int | None = typer.Option(None, "--candidates", help="Number of candidate harmonics."),
    seed: int | None = typer.Option(None, "--seed", help="Random seed (42 by default)."),
    grid_spatial: list[float] | None = typer.Option(None, "--grid-spatial", help="Event grid cell edge; repeatable."),
    grid_temporal: list[float] | None = typer.Option(
        None, "--grid-temporal", help="Event grid cell duration (s); repeatable."
    ),
    clamp: str | None = typer.Option(None, "--clamp", help="Clamp HyT predictions to lo:hi."),
    columns: str | None = ColumnsOption,
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite existing report files."),
    config: Path | None = ConfigOption,
) -> None:
    """
    Compare sweep-optimized Mean, Hist, FreMEn, HyT-EM and HyT-KM (and Zero for events) on held-out folds.
    """
    try:
        cfg = _run_config(
            config,
            mode=mode,
            max_h=max_h,
            longest_period=longest_period,
            candidates=candidates,
            seed=seed,
            grid_spatial=grid_spatial,
            grid_temporal=grid_temporal,
            clamp=clamp_range(clamp),
        )
        training = _load(input, cfg.mode, columns)
        tests = [_load(path, cfg.mode, columns) for path in test]
        build_cfg, eval_cfg = cfg.build_config(), cfg.evaluation_config()
        errors_path, report_path = out_dir / "errors.csv", out_dir / "report.json"
        heatmaps: dict[tuple[str, str], Path] = {}
        if training.mode == "event":
            heatmaps = {
                (key, method): out_dir / f"heatmap_{key}_{method}.dat"
                for key in heatmap_keys(len(tests), eval_cfg)
                for method in EVENT_METHODS
            }
        _check_targets([errors_path, report_path, *heatmaps.values()], force)

        if training.mode == "valued":
            report, _ = compare_valued(training, tests, build_cfg, eval_cfg)
        else:
            comparison = compare_events(training, tests, build_cfg, eval_cfg)
            report = comparison.report
            for (key, method), path in heatmaps.items():
                grids = comparison.heatmaps[key]
                write_heatmap(heatmap_rows(grids["observed"], grids[method]), path, force)
        rows = [
            {"method": m, "fold": fold, "error": e}
            for m in report.methods
            for fold, e in enumerate(report.errors[m], start=1)
        ]
        write_table(pd.DataFrame(rows, columns=["method", "fold", "error"]), errors_path, force)
        write_json(report, report_path, force)
        for m in report.methods:
            line = f"{m}\t{report.mean_errors[m]:.6g}"
            if m in report.error_reduction:
                line += f"\t{report.error_reduction[m]:+.1%}"
            typer.echo(line)
        for a, b in report.edges:
            typer.echo(f"{a} -> {b}")
    except Exception as e:
        typer.echo(f"Error evaluating: {e}", err=True)
        raise typer.Exit(code=1) from e


@app.command("spectrum")
def spectrum_cmd(
    input: Path = typer.Option(..., "--input", "-i", help="Valued CSV (t,a[,x..])."),
    longest_period: float | None = typer.Option(None, "--longest-period", help="Longest candidate period (s)."),
    candidates: int | None = typer.Option(None, "--candidates", help="Number of candidate harmonics."),
    config: Path | None = ConfigOption,
) -> None:
    """
    Print period,amplitude rows for the candidate periods, strongest first.
    """
    try:
        cfg = _run_config(config, longest_period=longest_period, candidates=candidates)
        dataset = _load(input, "valued")
        series = ResidualSeries(times=dataset.times, values=dataset.values)
        result = spectrum(series, default_candidates(cfg.longest_period, cfg.candidates))
        frame = pd.DataFrame([e.model_dump() for e in result.entries], columns=["period", "amplitude"])
        typer.echo(frame.to_csv(index=False, lineterminator="\n"), nl=False)
    except Exception as e:
        typer.echo(f"Error computing spectrum: {e}", err=True)
        raise typer.Exit(code=1) from e


@app.command()
def synthesize(
    kind: str = typer.Argument(..., help=f"Generator: {', '.join(sorted(GENERATORS))}."),
    out_dir: Path = typer.Option(Path("."), "--out-dir", "-o", help="Directory for train.csv and test_<k>.csv."),
    weeks: float = typer.Option(3, "--weeks", help="Length of the training set in weeks."),
    n_folds: int = typer.Option(5, "--folds", help="Number of one-week test sets."),
    seed: int = typer.Option(42, "--seed", help="Random seed."),
    force: bool = typer.Option(False, "--force", "-f", help="Overwrite existing files."),
) -> None:
    """
    Write a seeded synthetic benchmark: a training set and one-week test folds.
    """
    try:
        train_path = out_dir / "train.csv"
        test_paths = [out_dir / f"test_{k}.csv" for k in range(1, n_folds + 1)]
        _check_targets([train_path, *test_paths], force)
        training, tests = folds(kind, weeks, n_folds, seed)
        for dataset, path in zip([training, *tests], [train_path, *test_paths], strict=True):
            write_table(dataset_frame(dataset), path, force)
            typer.echo(f"{path}\t{len(dataset)}")
    except Exception as e:
        typer.echo(f"Error generating data: {e}", err=True)
        raise typer.Exit(code=1) from e


if __name__ == "__main__":
    app()

