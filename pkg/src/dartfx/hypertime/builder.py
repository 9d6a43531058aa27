"""
The iterative model build.

Each round fits a mixture over (value, space, hypertime) vectors, calibrates γ, measures the
training error, then extends hypertime with the most prominent period of the residuals. The loop
stops as soon as an extension fails to reduce the error and keeps the previous model.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

from dartfx.hypertime.clustering import fit_mixture
from dartfx.hypertime.dataset import Dataset, compute_stats, standardize
from dartfx.hypertime.errors import ClusteringError, ModelError, SpectralError
from dartfx.hypertime.model import (
    BuildConfig,
    BuildStep,
    ClusterCountSelection,
    FitConfig,
    HypertimeModel,
    HypertimeProjection,
    SpatialStats,
)
from dartfx.hypertime.predict import (
    ReferenceGrid,
    calibrate_event_gamma,
    calibrate_gamma,
    event_error,
    event_residuals,
    model_error,
    reference_grid,
    residuals,
)
from dartfx.hypertime.projection import assemble
from dartfx.hypertime.spectral import ResidualSeries, prominent_period, spectral_sum

logger = logging.getLogger(__name__)

# relative change of T_Σ below which two cluster counts tie
_TIE = 1e-9


@dataclass
class _Training:
    raw: Dataset
    standardized: Dataset
    stats: SpatialStats


def _prepare(train: Dataset, cfg: BuildConfig) -> _Training:
    if not len(train):
        raise ModelError("cannot build a model from an empty training set")
    stats = compute_stats(train) if cfg.standardize else SpatialStats.identity(train.spatial_dim)
    return _Training(train, standardize(train, stats), stats)


def _fit_valued(data: _Training, projection: HypertimeProjection, fit: FitConfig) -> HypertimeModel:
    vectors, layout = assemble(data.standardized, projection)
    draft = HypertimeModel(
        mode="valued",
        projection=projection,
        layout=layout,
        mixture=fit_mixture(vectors, layout, fit),
        gamma=1.0,
        spatial_stats=data.stats,
        training_error=0.0,
        training_count=len(data.raw),
    )
    gamma, degenerate = calibrate_gamma(draft, data.raw)
    model = draft.model_copy(update={"gamma": gamma, "gamma_degenerate": degenerate})
    return model.model_copy(update={"training_error": model_error(model, data.raw)})


def _fit_event(
    data: _Training, grid: ReferenceGrid, projection: HypertimeProjection, fit: FitConfig, cfg: BuildConfig
) -> HypertimeModel:
    vectors, layout = assemble(data.standardized, projection)
    draft = HypertimeModel(
        mode="event",
        projection=projection,
        layout=layout,
        mixture=fit_mixture(vectors, layout, fit),
        gamma=1.0,
        spatial_stats=data.stats,
        training_error=0.0,
        training_count=len(data.raw),
        event_grid=cfg.event_grid,
    )
    gamma, degenerate = calibrate_event_gamma(draft, grid)
    model = draft.model_copy(update={"gamma": gamma, "gamma_degenerate": degenerate})
    return model.model_copy(update={"training_error": event_error(model, grid)})


def _extend(
    first: HypertimeModel,
    fit: Callable[[HypertimeProjection], HypertimeModel],
    residual: Callable[[HypertimeModel], ResidualSeries],
    cfg: BuildConfig,
) -> HypertimeModel:
    candidates = cfg.spectral.candidates()
    n_clusters = first.mixture.n_components
    best = first
    log = [BuildStep(h=0, error=first.training_error, n_clusters=n_clusters)]
    logger.info("h=0: E=%.6g", first.training_error)
    while best.projection.h < cfg.max_h:
        try:
            period = prominent_period(residual(best), candidates, exclude=best.periods)
        except SpectralError as e:
            logger.info("Stopping: %s", e)
            break
        candidate = fit(best.projection.extended(period))
        accepted = candidate.training_error < best.training_error
        log.append(
            BuildStep(
                h=candidate.projection.h,
                error=candidate.training_error,
                period=period,
                n_clusters=n_clusters,
                accepted=accepted,
            )
        )
        logger.info(
            "h=%d: T=%.1f s, E=%.6g (%s)",
            candidate.projection.h,
            period,
            candidate.training_error,
            "kept" if accepted else "rejected",
        )
        if not accepted:
            break
        best = candidate
    return best.model_copy(update={"build_log": log})


def select_cluster_count(train: Dataset, cfg: BuildConfig | None = None) -> ClusterCountSelection:
    """
    Grow the number of clusters while the residual spectral sum keeps falling.

    Models are fitted with the k-means backend at h=0. Starting from n=1, the n+1 model is kept
    while ``T_Σ(n) > T_Σ(n+1)`` by more than rounding noise; the search stops at
    ``cfg.max_clusters`` or when a fit is impossible.
    """
    cfg = cfg or BuildConfig()
    if train.mode != "valued":
        raise ModelError("cluster-count selection needs a valued training set")
    data = _prepare(train, cfg)
    candidates = cfg.spectral.candidates()
    base = cfg.fit.model_copy(update={"backend": "km"})

    def spectral_total(n: int) -> float:
        model = _fit_valued(data, HypertimeProjection(), base.model_copy(update={"n_clusters": n}))
        return spectral_sum(residuals(model, data.raw), candidates)

    pairs = [(1, spectral_total(1))]
    n = 1
    while n < cfg.max_clusters:
        try:
            pairs.append((n + 1, spectral_total(n + 1)))
        except ClusteringError as e:
            logger.info("Cluster search stops at n=%d: %s", n, e)
            break
        if pairs[n][1] < pairs[n - 1][1] * (1.0 - _TIE):
            n += 1
        else:
            break
    logger.info("Chose %d cluster(s); T_Σ: %s", n, ", ".join(f"{k}:{v:.4g}" for k, v in pairs))
    return ClusterCountSelection(pairs=pairs, chosen=n)


def _fit_config(train: Dataset, cfg: BuildConfig) -> tuple[FitConfig, ClusterCountSelection | None]:
    if not cfg.auto_clusters:
        return cfg.fit, None
    selection = select_cluster_count(train, cfg)
    return cfg.fit.model_copy(update={"n_clusters": selection.chosen}), selection


def build(train: Dataset, cfg: BuildConfig | None = None) -> HypertimeModel:
    """
    Build a valued model, extending hypertime while the training error decreases.

    Args:
        train: Valued measurements (raw coordinates).
        cfg: Fit, spectral and loop settings. With ``auto_clusters`` the cluster count is chosen once
            by :func:`select_cluster_count` before any hypertime extension.

    Returns:
        HypertimeModel: the last model whose extension reduced the error, with the full build log.
    """
    cfg = cfg or BuildConfig()
    if train.mode != "valued":
        raise ModelError("build needs a valued training set; use build_event for events")
    fit, selection = _fit_config(train, cfg)
    data = _prepare(train, cfg)
    model = _extend(
        _fit_valued(data, HypertimeProjection(), fit),
        lambda projection: _fit_valued(data, projection, fit),
        lambda current: residuals(current, data.raw),
        cfg,
    )
    return model.model_copy(update={"cluster_selection": selection})


def build_event(train: Dataset, cfg: BuildConfig | None = None) -> HypertimeModel:
    """
    Build an event-mode model over (space, hypertime) detections.

    Residuals are count differences on a reference grid covering the standardized training box;
    γ makes the predicted total on that grid equal the number of training events.
    """
    cfg = cfg or BuildConfig()
    if train.mode != "event":
        raise ModelError("build_event needs an event dataset")
    if train.spatial_dim < 1:
        raise ModelError("event mode needs at least one spatial coordinate")
    if cfg.auto_clusters:
        raise ModelError("an automatic cluster count needs valued data")
    data = _prepare(train, cfg)
    grid = reference_grid(data.standardized, cfg.event_grid)
    fit = cfg.fit
    return _extend(
        _fit_event(data, grid, HypertimeProjection(), fit, cfg),
        lambda projection: _fit_event(data, grid, projection, fit, cfg),
        lambda current: event_residuals(current, grid),
        cfg,
    )


def build_any(train: Dataset, cfg: BuildConfig | None = None) -> HypertimeModel:
    """Dispatch on the dataset's mode."""
    return build(train, cfg) if train.mode == "valued" else build_event(train, cfg)
