"""
Error metrics, spatio-temporal grids, parameter sweeps and significance tests for comparing
temporal models.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import stats

from dartfx.hypertime.baselines import Predictor, fit_baseline, fremen_predictor, hist_predictor, mean_predictor
from dartfx.hypertime.builder import build, build_event
from dartfx.hypertime.dataset import Dataset, split_by_time
from dartfx.hypertime.errors import EvaluationError, HypertimeError
from dartfx.hypertime.model import (
    BaselineConfig,
    BuildConfig,
    ComparisonReport,
    EvaluationConfig,
    GridSpec,
    HypertimeModel,
    PairwiseTest,
    SweepResult,
)
from dartfx.hypertime.predict import HypertimePredictor, bin_events, predict_grid_counts

logger = logging.getLogger(__name__)

Factory = Callable[[Dataset, int], Predictor]


def rmse(predictions: Sequence[float] | np.ndarray, truth: Sequence[float] | np.ndarray) -> float:
    """Root of the mean squared difference."""
    p = np.asarray(predictions, dtype=float).reshape(-1)
    s = np.asarray(truth, dtype=float).reshape(-1)
    if p.size != s.size:
        raise EvaluationError(f"{p.size} predictions but {s.size} measurements")
    if p.size == 0:
        raise EvaluationError("cannot score empty sequences")
    return float(np.sqrt(np.mean((p - s) ** 2)))


class EvaluationGrid(BaseModel):
    """Per-cell values (observed ``d_g`` or predicted ``p_g``) over a :class:`GridSpec`."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    spec: GridSpec
    counts: np.ndarray

    @model_validator(mode="after")
    def _check(self) -> EvaluationGrid:
        if self.counts.shape != self.spec.shape:
            raise EvaluationError(f"grid values have shape {self.counts.shape}, spec needs {self.spec.shape}")
        if np.any(self.counts < 0) or not np.all(np.isfinite(self.counts)):
            raise EvaluationError("grid values must be finite and non-negative")
        return self

    @property
    def total(self) -> float:
        return float(self.counts.sum())


def _check_spec(spec: GridSpec) -> None:
    spans = [hi - lo for lo, hi in zip(spec.lower, spec.upper, strict=True)]
    if any(not s > 0 for s in spans) or not spec.t_end > spec.t_start:
        raise EvaluationError("grid box has zero size")


def grid_count(events: Dataset, spec: GridSpec) -> EvaluationGrid:
    """Count events per half-open cell; events outside the box are ignored."""
    _check_spec(spec)
    if events.spatial_dim != spec.spatial_dim:
        raise EvaluationError(f"events have {events.spatial_dim} spatial dimensions, grid has {spec.spatial_dim}")
    counts = bin_events(
        events.coords,
        events.times,
        spec.lower,
        [spec.spatial_cell] * spec.spatial_dim,
        spec.spatial_shape,
        spec.t_start,
        spec.temporal_cell,
        spec.temporal_bins,
    )
    return EvaluationGrid(spec=spec, counts=counts)


def histogram_l1(first: EvaluationGrid, second: EvaluationGrid) -> float:
    """Sum of absolute differences of corresponding cells."""
    if first.spec != second.spec:
        raise EvaluationError("histograms are defined over different grids")
    return float(np.abs(first.counts - second.counts).sum())


def model_grid(model: HypertimeModel, spec: GridSpec, subsample: int = 1) -> EvaluationGrid:
    """Predicted count of an event model for every cell of ``spec``."""
    _check_spec(spec)
    return EvaluationGrid(spec=spec, counts=predict_grid_counts(model, spec, subsample))


def _bin_centers(spec: GridSpec) -> np.ndarray:
    return spec.t_start + (np.arange(spec.temporal_bins) + 0.5) * spec.temporal_cell


def covering_spec(
    events: Dataset,
    spatial_cell: float,
    temporal_cell: float,
    box: tuple[Sequence[float], Sequence[float]] | None = None,
) -> GridSpec:
    """
    Smallest grid aligned at the events' minima that contains every event.

    ``box`` fixes the spatial corners instead; the time axis always follows the events.
    """
    if not len(events):
        raise EvaluationError("cannot cover an empty dataset")
    t_start = float(events.times.min())
    bins = math.floor(round(events.duration / temporal_cell, 9)) + 1
    if box is None:
        lower = events.coords.min(axis=0)
        span = events.coords.max(axis=0) - lower
        counts = np.floor(np.round(span / spatial_cell, 9)) + 1
        upper = lower + counts * spatial_cell
        box = (lower.tolist(), upper.tolist())
    return GridSpec(
        lower=list(box[0]),
        upper=list(box[1]),
        spatial_cell=spatial_cell,
        t_start=t_start,
        t_end=t_start + bins * temporal_cell,
        temporal_cell=temporal_cell,
    )


def per_cell_baseline(
    train: Dataset,
    spec: GridSpec,
    cfg: BaselineConfig,
    train_spec: GridSpec | None = None,
    candidates: Sequence[float] | None = None,
) -> EvaluationGrid:
    """
    Run one baseline per spatial cell over its series of training counts.

    Args:
        train: Training events.
        spec: Test grid whose bins are predicted.
        cfg: Baseline kind and parameter.
        train_spec: Grid for the training counts; by default the spatial part of ``spec`` over the
            training period.
        candidates: Candidate periods for FreMEn.

    Returns:
        EvaluationGrid: predicted counts, clipped at zero.
    """
    _check_spec(spec)
    if train_spec is None:
        period = covering_spec(train, spec.spatial_cell, spec.temporal_cell, (spec.lower, spec.upper))
        train_spec = spec.model_copy(update={"t_start": period.t_start, "t_end": period.t_end})
    if train_spec.spatial_shape != spec.spatial_shape:
        raise EvaluationError("training and test grids must share their spatial cells")
    history = grid_count(train, train_spec).counts.reshape(-1, train_spec.temporal_bins)
    train_times = _bin_centers(train_spec)
    test_times = _bin_centers(spec)
    predicted = np.zeros((history.shape[0], spec.temporal_bins))
    empty = np.zeros((train_times.size, 0))
    for cell, series in enumerate(history):
        if not series.any():
            continue
        predictor = fit_baseline(cfg, Dataset(times=train_times, coords=empty, values=series), candidates)
        predicted[cell] = predictor.predict(test_times)
    logger.debug("Per-cell %s baseline over %d cells", cfg.kind, history.shape[0])
    return EvaluationGrid(spec=spec, counts=np.maximum(predicted, 0.0).reshape(spec.shape))


def pairwise_ttests(per_fold_errors: Mapping[str, Sequence[float]], alpha: float = 0.05) -> ComparisonReport:
    """
    Paired two-sided t-tests between every ordered pair of methods.

    A→B is a dominance edge when A's mean error is lower and ``p < alpha``. Identical error vectors
    give ``t=0, p=1``; other zero-variance differences give ``t=p=None``; both are flagged degenerate.
    """
    methods = list(per_fold_errors)
    errors = {m: [float(e) for e in per_fold_errors[m]] for m in methods}
    folds = {len(v) for v in errors.values()}
    if len(folds) > 1:
        raise EvaluationError(f"methods disagree on the number of folds: {sorted(folds)}")
    count = folds.pop() if folds else 0
    if count < 2:
        raise EvaluationError(f"t-tests need at least 2 folds, got {count}")
    means = {m: float(np.mean(v)) for m, v in errors.items()}

    tests: list[PairwiseTest] = []
    edges: list[tuple[str, str]] = []
    for a in methods:
        for b in methods:
            if a == b:
                continue
            diff = np.asarray(errors[a]) - np.asarray(errors[b])
            if np.ptp(diff) == 0:
                identical = not diff.any()
                tests.append(
                    PairwiseTest(
                        a=a,
                        b=b,
                        t_statistic=0.0 if identical else None,
                        p_value=1.0 if identical else None,
                        degenerate=True,
                    )
                )
                continue
            result = stats.ttest_rel(errors[a], errors[b])
            t, p = float(result.statistic), float(result.pvalue)
            significant = means[a] < means[b] and p < alpha
            tests.append(PairwiseTest(a=a, b=b, t_statistic=t, p_value=p, significant=significant))
            if significant:
                edges.append((a, b))
    return ComparisonReport(
        methods=methods, alpha=alpha, folds=count, errors=errors, mean_errors=means, tests=tests, edges=edges
    )


def _best(parameters: Sequence[int], score: Callable[[int], float]) -> SweepResult:
    if not len(parameters):
        raise EvaluationError("parameter range is empty")
    scores: dict[int, float] = {}
    skipped: list[int] = []
    for parameter in parameters:
        try:
            scores[parameter] = score(parameter)
        except (HypertimeError, np.linalg.LinAlgError) as e:
            logger.warning("Skipping parameter %s: %s", parameter, e)
            skipped.append(parameter)
    if not scores:
        raise EvaluationError("every parameter in the sweep failed")
    best = min(scores, key=lambda k: (scores[k], k))
    logger.debug("Sweep scores %s, best %s", scores, best)
    return SweepResult(best=best, scores=scores, skipped=skipped)


def sweep(train: Dataset, validation: Dataset, factory: Factory, parameters: Sequence[int]) -> SweepResult:
    """
    Train one predictor per parameter and keep the one with the lowest validation RMSE.

    Parameters whose training fails are skipped with a warning; ties go to the smaller parameter.
    """
    if not len(parameters):
        raise EvaluationError("parameter range is empty")
    if validation.values is None:
        raise EvaluationError("validation set needs values")
    values = validation.values

    def score(parameter: int) -> float:
        predictor = factory(train, parameter)
        return rmse(predictor.predict(validation.times, validation.coords), values)

    return _best(parameters, score)


def error_reduction(errors: Mapping[str, float], reference: str = "Mean") -> dict[str, float]:
    """Relative reduction ``(E_ref - E) / E_ref`` of every method against ``reference``."""
    if reference not in errors:
        raise EvaluationError(f"reference method '{reference}' has no error")
    base = float(errors[reference])
    if base == 0:
        raise EvaluationError("reference error is zero")
    return {m: (base - float(e)) / base for m, e in errors.items()}


def heatmap_rows(observed: EvaluationGrid, predicted: EvaluationGrid) -> pd.DataFrame:
    """One row per cell: cell-center coordinates, time-bin index, ``d`` and ``p``."""
    if observed.spec != predicted.spec:
        raise EvaluationError("heatmap grids differ")
    spec = observed.spec
    index = np.indices(spec.shape).reshape(len(spec.shape), -1)
    frame = {
        f"x{k + 1}": spec.lower[k] + (index[k] + 0.5) * spec.spatial_cell for k in range(spec.spatial_dim)
    }
    frame["t_bin"] = index[-1]
    frame["d"] = observed.counts.reshape(-1)
    frame["p"] = predicted.counts.reshape(-1)
    return pd.DataFrame(frame)


def _hyt_factory(cfg: BuildConfig, backend: str, clamp: tuple[float, float] | None) -> Factory:
    def make(train: Dataset, k: int) -> Predictor:
        fit = cfg.fit.model_copy(update={"n_clusters": k, "backend": backend})
        model = build(train, cfg.model_copy(update={"fit": fit, "auto_clusters": False}))
        return HypertimePredictor(model, clamp=clamp)

    return make


def _auto_predictor(cfg: BuildConfig, clamp: tuple[float, float] | None) -> Callable[[Dataset], Predictor]:
    def make(train: Dataset) -> Predictor:
        fit = cfg.fit.model_copy(update={"backend": "km"})
        return HypertimePredictor(build(train, cfg.model_copy(update={"fit": fit, "auto_clusters": True})), clamp)

    return make


def compare_valued(
    train: Dataset,
    tests: Sequence[Dataset],
    build_cfg: BuildConfig | None = None,
    cfg: EvaluationConfig | None = None,
) -> tuple[ComparisonReport, dict[str, Predictor]]:
    """
    Sweep-optimize Mean, Hist_n, FreMEn_m, HyT-EM_k and HyT-KM, then score each on every test fold.

    Parameters are chosen on the last ``validation_fraction`` of the training span; the chosen
    predictors are retrained on the full training set. HyT-KM picks its own cluster count.
    """
    build_cfg = build_cfg or BuildConfig()
    cfg = cfg or EvaluationConfig()
    if not tests:
        raise EvaluationError("at least one test set is required")
    start = float(train.times.min())
    fit_part, validation = split_by_time(train, start + (1.0 - cfg.validation_fraction) * train.duration)
    candidates = build_cfg.spectral.candidates()

    families: dict[str, tuple[Factory, Sequence[int]]] = {
        "Hist": (hist_predictor, cfg.hist_intervals),
        "FreMEn": (lambda d, m: fremen_predictor(d, m, candidates), cfg.fremen_orders),
        "HyT-EM": (_hyt_factory(build_cfg, "em", cfg.clamp), cfg.clusters),
    }
    parameters: dict[str, int] = {}
    predictors: dict[str, Predictor] = {"Mean": mean_predictor(train)}
    for name, (factory, grid) in families.items():
        result = sweep(fit_part, validation, factory, grid)
        parameters[name] = result.best
        logger.info("%s: best parameter %d", name, result.best)
        predictors[name] = factory(train, result.best)
    km = _auto_predictor(build_cfg, cfg.clamp)(train)
    predictors["HyT-KM"] = km
    if isinstance(km, HypertimePredictor):
        parameters["HyT-KM"] = km.model.mixture.n_components

    errors: dict[str, list[float]] = {name: [] for name in predictors}
    for test in tests:
        if test.values is None:
            raise EvaluationError("valued comparison needs valued test sets")
        for name, predictor in predictors.items():
            errors[name].append(rmse(predictor.predict(test.times, test.coords), test.values))
    report = _report(errors, cfg.alpha)
    return report.model_copy(update={"parameters": parameters}), predictors


def _reduction(mean_errors: Mapping[str, float]) -> dict[str, float]:
    try:
        return error_reduction(mean_errors)
    except EvaluationError as e:
        logger.warning("No error reduction: %s", e)
        return {}


def _report(errors: dict[str, list[float]], alpha: float) -> ComparisonReport:
    folds = len(next(iter(errors.values())))
    if folds >= 2:
        report = pairwise_ttests(errors, alpha)
    else:
        logger.warning("Only %d test fold(s); skipping t-tests", folds)
        report = ComparisonReport(
            methods=list(errors),
            alpha=alpha,
            folds=folds,
            errors=errors,
            mean_errors={m: float(np.mean(v)) for m, v in errors.items()},
        )
    return report.model_copy(update={"error_reduction": _reduction(report.mean_errors)})


EVENT_METHODS = ("Mean", "Zero", "Hist", "FreMEn", "HyT-EM", "HyT-KM")
_EVENT_BACKENDS = {"HyT-EM": "em", "HyT-KM": "km"}


def heatmap_key(fold: int, spatial: float, temporal: float) -> str:
    """Name of the heatmap of test ``fold`` at one grid resolution."""
    return f"{fold}_{spatial:g}_{temporal:g}"


def heatmap_keys(folds: int, cfg: EvaluationConfig) -> list[str]:
    """Every heatmap key :func:`compare_events` produces for ``folds`` test sets."""
    return [
        heatmap_key(fold, spatial, temporal)
        for fold in range(1, folds + 1)
        for spatial in cfg.grid_spatial
        for temporal in cfg.grid_temporal
    ]


class EventComparison(BaseModel):
    """Outcome of :func:`compare_events`: the report and the grids behind each heatmap."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    report: ComparisonReport
    heatmaps: dict[str, Any]


def _event_model(train: Dataset, cfg: BuildConfig, backend: str, k: int) -> HypertimeModel:
    fit = cfg.fit.model_copy(update={"n_clusters": k, "backend": backend})
    return build_event(train, cfg.model_copy(update={"fit": fit, "auto_clusters": False}))


def _event_sweeps(
    train: Dataset,
    box: tuple[Sequence[float], Sequence[float]],
    build_cfg: BuildConfig,
    cfg: EvaluationConfig,
    candidates: Sequence[float],
) -> dict[str, int]:
    """Pick Hist_n, FreMEn_m and the HyT cluster counts by grid RMSE on the end of the training span."""
    start = float(train.times.min())
    fit_part, validation = split_by_time(train, start + (1.0 - cfg.validation_fraction) * train.duration)
    spec = covering_spec(validation, cfg.grid_spatial[0], cfg.grid_temporal[0], box)
    observed = grid_count(validation, spec).counts

    def baseline_score(make: Callable[[int], BaselineConfig]) -> Callable[[int], float]:
        return lambda p: rmse(per_cell_baseline(fit_part, spec, make(p), candidates=candidates).counts, observed)

    def model_score(backend: str) -> Callable[[int], float]:
        return lambda k: rmse(
            model_grid(_event_model(fit_part, build_cfg, backend, k), spec, cfg.subsample).counts, observed
        )

    families: dict[str, tuple[Callable[[int], float], Sequence[int]]] = {
        "Hist": (baseline_score(lambda n: BaselineConfig(kind="hist", n_intervals=n)), cfg.hist_intervals),
        "FreMEn": (baseline_score(lambda m: BaselineConfig(kind="fremen", m_components=m)), cfg.fremen_orders),
        **{name: (model_score(backend), cfg.clusters) for name, backend in _EVENT_BACKENDS.items()},
    }
    parameters: dict[str, int] = {}
    for name, (score, grid) in families.items():
        parameters[name] = _best(grid, score).best
        logger.info("%s: best parameter %d", name, parameters[name])
    return parameters


def compare_events(
    train: Dataset,
    tests: Sequence[Dataset],
    build_cfg: BuildConfig | None = None,
    cfg: EvaluationConfig | None = None,
) -> EventComparison:
    """
    Compare per-cell baselines with HyT event models on spatio-temporal count grids.

    Hist_n, FreMEn_m and the cluster count of both HyT models are chosen on the last
    ``validation_fraction`` of the training span, then refitted on all of it. Errors are the
    cell-wise RMSE and L1 distance on the first (spatial, temporal) resolution; heatmaps are kept
    for every resolution pair and test fold under :func:`heatmap_key`.
    """
    build_cfg = build_cfg or BuildConfig()
    cfg = cfg or EvaluationConfig()
    if not tests:
        raise EvaluationError("at least one test set is required")
    candidates = build_cfg.spectral.candidates()
    box_spec = covering_spec(train, cfg.grid_spatial[0], cfg.grid_temporal[0])
    box = (box_spec.lower, box_spec.upper)

    params = _event_sweeps(train, box, build_cfg, cfg, candidates)
    baselines = {
        "Mean": BaselineConfig(kind="mean"),
        "Zero": BaselineConfig(kind="zero"),
        "Hist": BaselineConfig(kind="hist", n_intervals=params["Hist"]),
        "FreMEn": BaselineConfig(kind="fremen", m_components=params["FreMEn"]),
    }
    models = {name: _event_model(train, build_cfg, backend, params[name]) for name, backend in _EVENT_BACKENDS.items()}

    errors: dict[str, list[float]] = {m: [] for m in EVENT_METHODS}
    l1: dict[str, list[float]] = {m: [] for m in EVENT_METHODS}
    heatmaps: dict[str, Any] = {}
    for fold, test in enumerate(tests, start=1):
        for s_index, spatial in enumerate(cfg.grid_spatial):
            for t_index, temporal in enumerate(cfg.grid_temporal):
                spec = covering_spec(test, spatial, temporal, _rebox(box, spatial))
                observed = grid_count(test, spec)
                grids = {
                    name: per_cell_baseline(train, spec, bc, candidates=candidates) for name, bc in baselines.items()
                }
                grids.update({name: model_grid(model, spec, cfg.subsample) for name, model in models.items()})
                heatmaps[heatmap_key(fold, spatial, temporal)] = {"observed": observed, **grids}
                if s_index == 0 and t_index == 0:
                    for name in EVENT_METHODS:
                        errors[name].append(rmse(grids[name].counts, observed.counts))
                        l1[name].append(histogram_l1(grids[name], observed))
    report = _report(errors, cfg.alpha).model_copy(update={"parameters": params, "l1_errors": l1})
    return EventComparison(report=report, heatmaps=heatmaps)


def _rebox(box: tuple[Sequence[float], Sequence[float]], cell: float) -> tuple[list[float], list[float]]:
    lower = np.asarray(box[0], dtype=float)
    span = np.asarray(box[1], dtype=float) - lower
    return lower.tolist(), (lower + np.ceil(np.round(span / cell, 9)) * cell).tolist()
