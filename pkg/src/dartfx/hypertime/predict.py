"""
Queries against a fitted :class:`~dartfx.hypertime.model.HypertimeModel`.

The joint density is ``p(a, x, t) = γ Σ_j w_j u_j(a, x, hypertime(t))``. Everything that integrates
over the value ``a`` is done in closed form by Gaussian marginalization and conditioning:

- ``q_j(x, t)``: component marginal over (space, hypertime),
- ``c_j(x, t)``: conditional mean of ``a`` given (space, hypertime),

so the expected value ``μ = ∫ a p da = γ Σ_j w_j q_j c_j``. Locations are standardized with the
training statistics stored in the model; density values are with respect to standardized space.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from typing import NamedTuple, override

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import linalg
from scipy.special import logsumexp

from dartfx.hypertime.baselines import Predictor
from dartfx.hypertime.clustering import gaussian_log_density
from dartfx.hypertime.dataset import Dataset, standardize_coords
from dartfx.hypertime.errors import ModelError
from dartfx.hypertime.model import EventGridConfig, GridSpec, HypertimeModel, MixtureModel
from dartfx.hypertime.projection import project_time
from dartfx.hypertime.spectral import ResidualSeries

logger = logging.getLogger(__name__)

# bound on query vectors evaluated at once when integrating over grids
_CHUNK = 250_000


class ConditionalComponent(NamedTuple):
    """One Gaussian of the value distribution at a query point."""

    weight: float
    mean: float
    variance: float


def _batch(model: HypertimeModel, x, t) -> tuple[np.ndarray, np.ndarray, bool]:
    times = np.asarray(t, dtype=float)
    scalar = times.ndim == 0
    times = times.reshape(-1)
    coords = np.asarray([] if x is None else x, dtype=float)
    if coords.ndim < 2:
        coords = coords.reshape(1, -1) if coords.size else np.zeros((1, 0))
    if coords.shape[1] != model.spatial_dim:
        raise ModelError(f"model expects {model.spatial_dim} spatial coordinates, got {coords.shape[1]}")
    if coords.shape[0] == 1 and times.size != 1:
        coords = np.repeat(coords, times.size, axis=0)
    if coords.shape[0] != times.size:
        raise ModelError(f"{coords.shape[0]} locations but {times.size} timestamps")
    return coords, times, scalar


def _conditions(model: HypertimeModel, coords: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Standardized locations followed by hypertime coordinates, in layout order."""
    return np.hstack([standardize_coords(coords, model.spatial_stats), project_time(times, model.projection)])


def _log_marginals(mixture: MixtureModel, conditions: np.ndarray) -> np.ndarray:
    index = mixture.layout.condition_indices
    means, covariances = mixture.means, mixture.covariances
    columns = [
        gaussian_log_density(conditions, means[k][index], covariances[k][np.ix_(index, index)])
        for k in range(mixture.n_components)
    ]
    return np.column_stack(columns)


def _conditional_moments(mixture: MixtureModel, conditions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-component conditional means (l, n) and variances (n,) of the value dimension."""
    layout = mixture.layout
    if layout.value_index is None:
        raise ModelError("event-mode models have no value dimension")
    v, index = layout.value_index, layout.condition_indices
    means, covariances = mixture.means, mixture.covariances
    cond_means = np.empty((conditions.shape[0], mixture.n_components))
    variances = np.empty(mixture.n_components)
    for k in range(mixture.n_components):
        mu, cov = means[k], covariances[k]
        if index:
            block = cov[np.ix_(index, index)]
            cross = cov[v, index]
            solved = linalg.solve(block, (conditions - mu[index]).T, assume_a="pos")
            cond_means[:, k] = mu[v] + cross @ solved
            variances[k] = cov[v, v] - cross @ linalg.solve(block, cross, assume_a="pos")
        else:
            cond_means[:, k] = mu[v]
            variances[k] = cov[v, v]
    return cond_means, np.maximum(variances, 0.0)


def _finish(values: np.ndarray, scalar: bool) -> float | np.ndarray:
    return float(values[0]) if scalar else values


def density(model: HypertimeModel, x, t, a: float | Sequence[float] | None = None) -> float | np.ndarray:
    """
    ``γ Σ_j w_j u_j`` at the assembled query vector(s).

    ``a`` must be given for valued models and omitted for event models. ``x`` is one location or an
    (l, d_s) array; ``t`` a timestamp or an array of l timestamps.
    """
    coords, times, scalar = _batch(model, x, t)
    parts = [_conditions(model, coords, times)]
    if model.mode == "valued":
        if a is None:
            raise ModelError("valued models need a value to evaluate the density")
        values = np.asarray(a, dtype=float).reshape(-1)
        if values.size == 1 and times.size != 1:
            values = np.repeat(values, times.size)
        if values.size != times.size:
            raise ModelError(f"{values.size} values but {times.size} timestamps")
        parts.insert(0, values[:, None])
    elif a is not None:
        raise ModelError("event-mode models carry no value dimension")
    vectors = np.hstack(parts)
    mixture = model.mixture
    joint = np.column_stack(
        [
            math.log(c.weight) + gaussian_log_density(vectors, mu, cov)
            for c, mu, cov in zip(mixture.components, mixture.means, mixture.covariances, strict=True)
        ]
    )
    return _finish(model.gamma * np.exp(logsumexp(joint, axis=1)), scalar)


def marginal_mass(model: HypertimeModel, x, t) -> float | np.ndarray:
    """``Σ_j w_j q_j(x, t)``: the mixture with the value integrated out, without the scale γ."""
    coords, times, scalar = _batch(model, x, t)
    log_q = _log_marginals(model.mixture, _conditions(model, coords, times))
    return _finish(np.exp(logsumexp(log_q + np.log(model.mixture.weights), axis=1)), scalar)


def _raw_means(model: HypertimeModel, coords: np.ndarray, times: np.ndarray) -> np.ndarray:
    conditions = _conditions(model, coords, times)
    weighted = np.exp(_log_marginals(model.mixture, conditions)) * model.mixture.weights
    cond_means, _ = _conditional_moments(model.mixture, conditions)
    return (weighted * cond_means).sum(axis=1)


def predict_mean(model: HypertimeModel, x, t) -> float | np.ndarray:
    """Expected value ``μ(x, t) = γ Σ_j w_j q_j c_j``."""
    if model.mode != "valued":
        raise ModelError("predict_mean needs a valued model")
    coords, times, scalar = _batch(model, x, t)
    return _finish(model.gamma * _raw_means(model, coords, times), scalar)


def conditional_distribution(model: HypertimeModel, x, t: float) -> list[ConditionalComponent]:
    """
    The distribution of ``a`` at one location and time, as a Gaussian mixture.

    Weights are ``w_j q_j`` normalized to one; components whose marginal underflows get weight 0.
    If every marginal underflows, the prior weights are returned.
    """
    if model.mode != "valued":
        raise ModelError("conditional_distribution needs a valued model")
    coords, times, _ = _batch(model, x, np.asarray(t, dtype=float).reshape(1))
    conditions = _conditions(model, coords, times)
    log_weights = _log_marginals(model.mixture, conditions)[0] + np.log(model.mixture.weights)
    total = logsumexp(log_weights)
    weights = np.exp(log_weights - total) if np.isfinite(total) else model.mixture.weights
    cond_means, variances = _conditional_moments(model.mixture, conditions)
    return [
        ConditionalComponent(float(w), float(m), float(v))
        for w, m, v in zip(weights, cond_means[0], variances, strict=True)
    ]


def _valued_arrays(dataset: Dataset) -> np.ndarray:
    if dataset.values is None:
        raise ModelError("a valued dataset is required")
    if not len(dataset):
        raise ModelError("dataset is empty")
    return dataset.values


def calibrate_gamma(model: HypertimeModel, train: Dataset) -> tuple[float, bool]:
    """
    Scale making the training-set mean of μ equal the mean of the measured values.

    The model's current γ is ignored. Returns ``(γ, degenerate)``; when the ratio is not a finite
    positive number (for example all values are zero) γ falls back to 1 and ``degenerate`` is True.
    """
    if model.mode != "valued":
        raise ModelError("calibrate_gamma needs a valued model")
    values = _valued_arrays(train)
    numerator = float(values.sum())
    denominator = float(_raw_means(model, train.coords, train.times).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = numerator / denominator if denominator != 0 else float("nan")
    if not (math.isfinite(gamma) and gamma > 0):
        logger.warning(
            "Cannot calibrate scale (Σa=%.6g, Σ∫a·p da=%.6g); using γ=1", numerator, denominator
        )
        return 1.0, True
    return gamma, False


def residuals(model: HypertimeModel, dataset: Dataset) -> ResidualSeries:
    """``ε_i = μ_i - a_i`` in record order."""
    values = _valued_arrays(dataset)
    predicted = np.asarray(predict_mean(model, dataset.coords, dataset.times)).reshape(-1)
    return ResidualSeries(times=dataset.times, values=predicted - values)


def model_error(model: HypertimeModel, dataset: Dataset) -> float:
    """Root mean squared difference between μ_i and a_i."""
    series = residuals(model, dataset)
    return float(np.sqrt(np.mean(series.values**2)))


def _subcell_centers(lower: float, cell: float, count: int, subsample: int) -> np.ndarray:
    offsets = (np.arange(subsample) + 0.5) / subsample
    return lower + cell * (np.arange(count)[:, None] + offsets[None, :]).reshape(-1)


def _grid_mass(
    model: HypertimeModel,
    lower: np.ndarray,
    cells: np.ndarray,
    spatial_shape: Sequence[int],
    t_start: float,
    temporal_cell: float,
    bins: int,
    subsample: int,
) -> np.ndarray:
    """
    Mean marginal mass over the ``s^(d+1)`` sub-cell midpoints of every cell.

    ``lower`` and ``cells`` are in standardized units, one entry per spatial dimension. The result
    has shape ``(*spatial_shape, bins)``.
    """
    s = subsample
    axes = [_subcell_centers(lo, c, n, s) for lo, c, n in zip(lower, cells, spatial_shape, strict=True)]
    t_axis = _subcell_centers(t_start, temporal_cell, bins, s)
    spatial = (
        np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes)) if axes else np.zeros((1, 0))
    )
    hypertime = project_time(t_axis, model.projection)
    log_w = np.log(model.mixture.weights)
    index = model.mixture.layout.condition_indices
    means, covariances = model.mixture.means, model.mixture.covariances

    mass = np.empty((spatial.shape[0], t_axis.size))
    rows = max(1, _CHUNK // max(1, t_axis.size))
    for start in range(0, spatial.shape[0], rows):
        block = spatial[start : start + rows]
        vectors = np.hstack(
            [np.repeat(block, t_axis.size, axis=0), np.tile(hypertime, (block.shape[0], 1))]
        )
        joint = np.column_stack(
            [
                log_w[k] + gaussian_log_density(vectors, means[k][index], covariances[k][np.ix_(index, index)])
                for k in range(model.mixture.n_components)
            ]
        )
        mass[start : start + rows] = np.exp(logsumexp(joint, axis=1)).reshape(block.shape[0], t_axis.size)

    fine_shape: list[int] = []
    for n in spatial_shape:
        fine_shape.extend((n, s))
    fine_shape.extend((bins, s))
    mass = mass.reshape(fine_shape)
    return mass.mean(axis=tuple(range(1, len(fine_shape), 2)))


def _raw_volume(model: HypertimeModel, cells: np.ndarray, temporal_cell: float) -> float:
    std = np.asarray(model.spatial_stats.std, dtype=float)
    return float(np.prod(cells * std) * temporal_cell)


def predict_grid_counts(model: HypertimeModel, spec: GridSpec, subsample: int = 1) -> np.ndarray:
    """Predicted event count ``p_g`` for every cell of ``spec`` (raw units), shape ``spec.shape``."""
    if model.mode != "event":
        raise ModelError("cell counts need an event-mode model")
    if spec.spatial_dim != model.spatial_dim:
        raise ModelError(f"grid has {spec.spatial_dim} spatial dimensions, model has {model.spatial_dim}")
    if subsample < 1:
        raise ModelError(f"subsample must be at least 1, got {subsample}")
    std = np.asarray(model.spatial_stats.std, dtype=float)
    lower = (np.asarray(spec.lower, dtype=float) - np.asarray(model.spatial_stats.mean)) / std
    cells = np.full(spec.spatial_dim, spec.spatial_cell) / std
    mass = _grid_mass(
        model, lower, cells, spec.spatial_shape, spec.t_start, spec.temporal_cell, spec.temporal_bins, subsample
    )
    return model.gamma * mass * _raw_volume(model, cells, spec.temporal_cell)


def predict_cell_count(
    model: HypertimeModel,
    lower: Sequence[float],
    upper: Sequence[float],
    t_start: float,
    t_end: float,
    subsample: int = 1,
) -> float:
    """
    Predicted number of events in the box ``[lower, upper) x [t_start, t_end)``.

    With ``subsample=1`` this is γ times the mass at the cell center times the cell volume; larger
    values average the mass over ``subsample^(d+1)`` sub-cell midpoints.
    """
    if model.mode != "event":
        raise ModelError("cell counts need an event-mode model")
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    if lo.size != model.spatial_dim or hi.size != model.spatial_dim:
        raise ModelError(f"cell corners must have {model.spatial_dim} coordinates")
    if np.any(hi <= lo) or not t_end > t_start:
        raise ModelError("cell has zero volume")
    if subsample < 1:
        raise ModelError(f"subsample must be at least 1, got {subsample}")
    std = np.asarray(model.spatial_stats.std, dtype=float)
    lower_std = (lo - np.asarray(model.spatial_stats.mean)) / std
    cells = (hi - lo) / std
    mass = _grid_mass(model, lower_std, cells, [1] * lo.size, t_start, t_end - t_start, 1, subsample)
    return float(model.gamma * mass.reshape(-1)[0] * _raw_volume(model, cells, t_end - t_start))


def bin_events(
    coords: np.ndarray,
    times: np.ndarray,
    lower: Sequence[float],
    cells: Sequence[float],
    spatial_shape: Sequence[int],
    t_start: float,
    temporal_cell: float,
    bins: int,
) -> np.ndarray:
    """
    Count events per half-open cell; events outside the box are dropped.

    Cell indices are ``floor((v - lo) / cell)`` after rounding the ratio to 9 decimals, so an event
    on a shared edge lands in the higher cell.
    """
    coords = np.asarray(coords, dtype=float).reshape(len(times), -1)
    shape = (*spatial_shape, bins)
    columns = [
        (coords[:, k] - lower[k]) / cells[k] for k in range(len(spatial_shape))
    ] + [(np.asarray(times, dtype=float) - t_start) / temporal_cell]
    indices = [np.floor(np.round(c, 9)).astype(np.int64) for c in columns]
    inside = np.ones(len(times), dtype=bool)
    for index, n in zip(indices, shape, strict=True):
        inside &= (index >= 0) & (index < n)
    flat = np.ravel_multi_index(tuple(index[inside] for index in indices), shape)
    return np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape).astype(float)


class ReferenceGrid(BaseModel):
    """Training-box grid in standardized units with the observed counts per cell."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    lower: list[float]
    cells: list[float]
    spatial_shape: list[int]
    t_start: float
    temporal_cell: float
    bins: int
    subsample: int
    counts: np.ndarray

    @property
    def bin_centers(self) -> np.ndarray:
        return self.t_start + (np.arange(self.bins) + 0.5) * self.temporal_cell


def reference_grid(train: Dataset, cfg: EventGridConfig) -> ReferenceGrid:
    """
    Cover standardized training events with ``floor(span / cell) + 1`` cells per axis.

    ``train`` must already be standardized.
    """
    if not len(train):
        raise ModelError("cannot build a reference grid over an empty dataset")
    lower = train.coords.min(axis=0)
    span = train.coords.max(axis=0) - lower
    shape = [int(math.floor(round(s / cfg.spatial_cell, 9))) + 1 for s in span]
    t_start = float(train.times.min())
    bins = int(math.floor(round(train.duration / cfg.temporal_cell, 9))) + 1
    cells = [cfg.spatial_cell] * train.spatial_dim
    counts = bin_events(train.coords, train.times, lower, cells, shape, t_start, cfg.temporal_cell, bins)
    logger.debug("Reference grid %s x %d bins holds %d events", shape, bins, int(counts.sum()))
    return ReferenceGrid(
        lower=lower.tolist(),
        cells=cells,
        spatial_shape=shape,
        t_start=t_start,
        temporal_cell=cfg.temporal_cell,
        bins=bins,
        subsample=cfg.subsample,
        counts=counts,
    )


def reference_counts(model: HypertimeModel, grid: ReferenceGrid) -> np.ndarray:
    """Predicted counts on the reference grid under the model's γ."""
    cells = np.asarray(grid.cells, dtype=float)
    mass = _grid_mass(
        model,
        np.asarray(grid.lower),
        cells,
        grid.spatial_shape,
        grid.t_start,
        grid.temporal_cell,
        grid.bins,
        grid.subsample,
    )
    return model.gamma * mass * _raw_volume(model, cells, grid.temporal_cell)


def calibrate_event_gamma(model: HypertimeModel, grid: ReferenceGrid) -> tuple[float, bool]:
    """Scale making the predicted total over the reference grid equal the observed event count."""
    unscaled = reference_counts(model.model_copy(update={"gamma": 1.0}), grid)
    observed = float(grid.counts.sum())
    total = float(unscaled.sum())
    gamma = observed / total if total > 0 else float("nan")
    if not (math.isfinite(gamma) and gamma > 0):
        logger.warning("Cannot calibrate event scale (events=%d, mass=%.6g); using γ=1", observed, total)
        return 1.0, True
    return gamma, False


def event_residuals(model: HypertimeModel, grid: ReferenceGrid) -> ResidualSeries:
    """Predicted minus observed count for every reference cell, stamped with its bin center."""
    difference = reference_counts(model, grid) - grid.counts
    flat = difference.reshape(-1, grid.bins)
    times = np.tile(grid.bin_centers, flat.shape[0])
    return ResidualSeries(times=times, values=flat.reshape(-1))


def event_error(model: HypertimeModel, grid: ReferenceGrid) -> float:
    return float(np.sqrt(np.mean(event_residuals(model, grid).values ** 2)))


class HypertimePredictor(Predictor):
    """Valued model behind the baseline contract, optionally clamping outputs to ``[lo, hi]``."""

    def __init__(self, model: HypertimeModel, clamp: tuple[float, float] | None = None, label: str | None = None):
        if model.mode != "valued":
            raise ModelError("only valued models answer value queries")
        self.model = model
        self.clamp = clamp
        self._label = label

    @property
    def name(self) -> str:
        if self._label:
            return self._label
        return f"HyT_{self.model.mixture.n_components}"

    @override
    def predict(self, times, coords=None) -> np.ndarray:
        times = np.asarray(times, dtype=float).reshape(-1)
        if coords is None:
            coords = np.zeros((times.size, self.model.spatial_dim))
        values = np.asarray(predict_mean(self.model, coords, times), dtype=float).reshape(-1)
        if self.clamp is not None:
            values = np.clip(values, *self.clamp)
        return values


def clamp_range(spec: str | None) -> tuple[float, float] | None:
    """Parse ``lo:hi``."""
    if not spec:
        return None
    parts = spec.split(":")
    if len(parts) != 2:
        raise ModelError(f"clamp range must look like lo:hi, got {spec!r}")
    lo, hi = (float(p) for p in parts)
    if not lo <= hi:
        raise ModelError(f"clamp range {spec!r} is empty")
    return lo, hi


