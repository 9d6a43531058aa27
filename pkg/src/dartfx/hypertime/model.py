from __future__ import annotations

import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

Mode = Literal["valued", "event"]
Backend = Literal["em", "km"]
BaselineKind = Literal["mean", "hist", "fremen", "zero"]

MODEL_FORMAT_VERSION = 1
WEEK = 604800.0
DAY = 86400.0


class SpatialStats(BaseModel):
    """Per-dimension mean and standard deviation of the spatial coordinates of a training set."""

    mean: list[float]
    std: list[float]

    @model_validator(mode="after")
    def _check(self) -> SpatialStats:
        if len(self.mean) != len(self.std):
            raise ValueError("mean and std must have the same length")
        if any(not (s > 0) for s in self.std):
            raise ValueError("standard deviations must be positive")
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def spatial_dim(self) -> int:
        return len(self.mean)

    @classmethod
    def identity(cls, spatial_dim: int) -> SpatialStats:
        return cls(mean=[0.0] * spatial_dim, std=[1.0] * spatial_dim)


class HypertimeProjection(BaseModel):
    """Ordered periods T_1..T_h, in seconds, that warp linear time onto circles."""

    periods: list[float] = Field(default_factory=list)

    @field_validator("periods")
    @classmethod
    def _check_periods(cls, periods: list[float]) -> list[float]:
        for period in periods:
            if not (period > 0) or not math.isfinite(period):
                raise ValueError(f"period must be positive and finite, got {period}")
        if len(set(periods)) != len(periods):
            raise ValueError(f"periods must be distinct, got {periods}")
        return periods

    @computed_field  # type: ignore[prop-decorator]
    @property
    def h(self) -> int:
        return len(self.periods)

    def extended(self, period: float) -> HypertimeProjection:
        return HypertimeProjection(periods=[*self.periods, period])


class DimensionLayout(BaseModel):
    """Where the value, spatial and hypertime coordinates sit inside a clustered vector."""

    value_index: int | None = None
    spatial_start: int = 0
    spatial_stop: int = 0
    temporal_pairs: list[tuple[int, int]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_cover(self) -> DimensionLayout:
        indices: list[int] = []
        if self.value_index is not None:
            indices.append(self.value_index)
        indices.extend(range(self.spatial_start, self.spatial_stop))
        for cos_index, sin_index in self.temporal_pairs:
            indices.extend((cos_index, sin_index))
        if sorted(indices) != list(range(len(indices))):
            raise ValueError(f"layout indices must be disjoint and cover 0..{len(indices) - 1}")
        return self

    @classmethod
    def create(cls, has_value: bool, spatial_dim: int, n_periods: int = 0) -> DimensionLayout:
        offset = 1 if has_value else 0
        stop = offset + spatial_dim
        pairs = [(stop + 2 * k, stop + 2 * k + 1) for k in range(n_periods)]
        return cls(
            value_index=0 if has_value else None,
            spatial_start=offset,
            spatial_stop=stop,
            temporal_pairs=pairs,
        )

    @property
    def has_value(self) -> bool:
        return self.value_index is not None

    @property
    def spatial_dim(self) -> int:
        return self.spatial_stop - self.spatial_start

    @property
    def n_periods(self) -> int:
        return len(self.temporal_pairs)

    @property
    def dimension(self) -> int:
        return (1 if self.has_value else 0) + self.spatial_dim + 2 * self.n_periods

    @property
    def linear_indices(self) -> list[int]:
        """Indices measured with the Euclidean part of the mixed metric (value and space)."""
        head = [self.value_index] if self.value_index is not None else []
        return head + list(range(self.spatial_start, self.spatial_stop))

    @property
    def condition_indices(self) -> list[int]:
        """Every index except the value one: the coordinates a prediction is conditioned on."""
        return [i for i in range(self.dimension) if i != self.value_index]

    def extended(self) -> DimensionLayout:
        return DimensionLayout.create(self.has_value, self.spatial_dim, self.n_periods + 1)


class GaussianComponent(BaseModel):
    weight: float
    mean: list[float]
    covariance: list[list[float]]

    @model_validator(mode="after")
    def _check(self) -> GaussianComponent:
        if not (0.0 < self.weight <= 1.0 + 1e-12):
            raise ValueError(f"component weight must lie in (0, 1], got {self.weight}")
        size = len(self.mean)
        if len(self.covariance) != size or any(len(row) != size for row in self.covariance):
            raise ValueError("covariance order must match the mean length")
        matrix = np.asarray(self.covariance, dtype=float).reshape(size, size)
        if not np.all(np.isfinite(matrix)) or not np.allclose(matrix, matrix.T, rtol=1e-9, atol=1e-12):
            raise ValueError("covariance must be a finite symmetric matrix")
        if size and np.linalg.eigvalsh(matrix)[0] <= 0:
            raise ValueError("covariance must be positive definite")
        return self


class FitLog(BaseModel):
    """What happened while a mixture was fitted."""

    iterations: int = 0
    log_likelihood: float = float("-inf")
    log_likelihood_history: list[float] = Field(default_factory=list)
    converged: bool = False
    restarts: int = 0
    diagonal_fallback: bool = False
    unstable: bool = False
    min_eigenvalue: float | None = None  # before flooring
    max_condition: float | None = None  # before flooring


class MixtureModel(BaseModel):
    """n weighted Gaussian components over the (value, space, hypertime) vector space."""

    components: list[GaussianComponent]
    layout: DimensionLayout
    fit_log: FitLog = Field(default_factory=FitLog)

    @model_validator(mode="after")
    def _check(self) -> MixtureModel:
        if not self.components:
            raise ValueError("a mixture needs at least one component")
        total = sum(c.weight for c in self.components)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"component weights must sum to 1, got {total}")
        for component in self.components:
            if len(component.mean) != self.layout.dimension:
                raise ValueError(
                    f"component dimension {len(component.mean)} does not match layout dimension "
                    f"{self.layout.dimension}"
                )
        return self

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components], dtype=float)

    @property
    def means(self) -> np.ndarray:
        return np.array([c.mean for c in self.components], dtype=float).reshape(self.n_components, -1)

    @property
    def covariances(self) -> np.ndarray:
        dim = self.layout.dimension
        return np.array([c.covariance for c in self.components], dtype=float).reshape(self.n_components, dim, dim)

    @classmethod
    def from_arrays(
        cls,
        weights: np.ndarray,
        means: np.ndarray,
        covariances: np.ndarray,
        layout: DimensionLayout,
        fit_log: FitLog | None = None,
    ) -> MixtureModel:
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
        components = [
            GaussianComponent(weight=float(w), mean=mu.tolist(), covariance=cov.tolist())
            for w, mu, cov in zip(weights, np.asarray(means), np.asarray(covariances), strict=True)
        ]
        return cls(components=components, layout=layout, fit_log=fit_log or FitLog())


class FitConfig(BaseModel):
    """Mixture fitting settings; ``n_clusters`` is the k of HyT-EM_k."""

    n_clusters: int = Field(default=3, ge=1)
    max_iter: int = Field(default=300, ge=1)
    tol: float = Field(default=1e-7, gt=0)
    max_restarts: int = Field(default=5, ge=0)
    eigen_floor: float = Field(default=1e-6, gt=0)
    condition_ceiling: float = Field(default=1e10, gt=1)
    seed: int = 42
    backend: Backend = "em"
    kmeans_max_iter: int = Field(default=100, ge=1)
    diagonal: bool = False


class SpectralConfig(BaseModel):
    """Candidate periods: harmonics ``longest / k`` for k = 1..count, unless ``periods`` is given."""

    longest_period: float = Field(default=WEEK, gt=0)
    candidate_count: int = Field(default=168, ge=1)
    periods: list[float] | None = None

    def candidates(self) -> list[float]:
        if self.periods:
            return list(self.periods)
        from dartfx.hypertime.spectral import default_candidates

        return default_candidates(longest=self.longest_period, count=self.candidate_count)


class EventGridConfig(BaseModel):
    """Reference grid used in event mode for residuals and for calibrating the scale."""

    spatial_cell: float = Field(default=0.5, gt=0)  # in standardized units
    temporal_cell: float = Field(default=1800.0, gt=0)
    subsample: int = Field(default=2, ge=1)


class BuildConfig(BaseModel):
    fit: FitConfig = Field(default_factory=FitConfig)
    spectral: SpectralConfig = Field(default_factory=SpectralConfig)
    event_grid: EventGridConfig = Field(default_factory=EventGridConfig)
    max_h: int = Field(default=5, ge=0)
    standardize: bool = True
    auto_clusters: bool = False
    max_clusters: int = Field(default=8, ge=1)


class BuildStep(BaseModel):
    """One iteration of the build loop."""

    h: int
    error: float
    period: float | None = None
    n_clusters: int
    accepted: bool = True


class ClusterCountSelection(BaseModel):
    pairs: list[tuple[int, float]]
    chosen: int


class HypertimeModel(BaseModel):
    """The deployable predictor: mixture, projection, scale and standardization."""

    format_version: int = MODEL_FORMAT_VERSION
    mode: Mode
    projection: HypertimeProjection = Field(default_factory=HypertimeProjection)
    layout: DimensionLayout
    mixture: MixtureModel
    gamma: float
    gamma_degenerate: bool = False
    spatial_stats: SpatialStats
    training_error: float
    training_count: int = 0
    build_log: list[BuildStep] = Field(default_factory=list)
    cluster_selection: ClusterCountSelection | None = None
    event_grid: EventGridConfig | None = None

    @model_validator(mode="after")
    def _check(self) -> HypertimeModel:
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be finite and positive, got {self.gamma}")
        if self.projection.h != self.layout.n_periods:
            raise ValueError("projection length does not match the layout's temporal pairs")
        if self.layout.has_value != (self.mode == "valued"):
            raise ValueError(f"layout value dimension does not match mode '{self.mode}'")
        if self.format_version != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {self.format_version}")
        return self

    @property
    def periods(self) -> list[float]:
        return list(self.projection.periods)

    @property
    def spatial_dim(self) -> int:
        return self.layout.spatial_dim


class SpectrumEntry(BaseModel):
    period: float
    amplitude: float


class SpectrumResult(BaseModel):
    """Amplitude per candidate period, sorted by descending amplitude."""

    entries: list[SpectrumEntry]

    @computed_field  # type: ignore[prop-decorator]
    @property
    def candidate_count(self) -> int:
        return len(self.entries)

    @property
    def top(self) -> SpectrumEntry:
        return self.entries[0]


class BaselineConfig(BaseModel):
    kind: BaselineKind = "mean"
    n_intervals: int = Field(default=24, ge=1)
    m_components: int = Field(default=2, ge=0)


class GridSpec(BaseModel):
    """Spatio-temporal box cut into half-open cells of equal size."""

    model_config = ConfigDict(frozen=True)

    lower: list[float] = Field(default_factory=list)
    upper: list[float] = Field(default_factory=list)
    spatial_cell: float = Field(default=0.1, gt=0)
    t_start: float
    t_end: float
    temporal_cell: float = Field(default=1800.0, gt=0)

    @model_validator(mode="after")
    def _check(self) -> GridSpec:
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper corners must have the same dimension")
        return self

    @property
    def spatial_dim(self) -> int:
        return len(self.lower)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return tuple(
            max(1, math.ceil(round((hi - lo) / self.spatial_cell, 9)))
            for lo, hi in zip(self.lower, self.upper, strict=True)
        )

    @property
    def temporal_bins(self) -> int:
        return max(1, math.ceil(round((self.t_end - self.t_start) / self.temporal_cell, 9)))

    @property
    def shape(self) -> tuple[int, ...]:
        return (*self.spatial_shape, self.temporal_bins)

    @property
    def cell_volume(self) -> float:
        return self.spatial_cell**self.spatial_dim * self.temporal_cell


class PairwiseTest(BaseModel):
    a: str
    b: str
    t_statistic: float | None
    p_value: float | None
    significant: bool = False
    degenerate: bool = False


class ComparisonReport(BaseModel):
    """Per-method errors, the ordered pairwise t-tests and the resulting dominance edges."""

    methods: list[str]
    alpha: float = 0.05
    folds: int
    errors: dict[str, list[float]]
    mean_errors: dict[str, float]
    tests: list[PairwiseTest] = Field(default_factory=list)
    edges: list[tuple[str, str]] = Field(default_factory=list)
    parameters: dict[str, int] = Field(default_factory=dict)
    # relative reduction of the mean error against Mean; empty when Mean scores zero
    error_reduction: dict[str, float] = Field(default_factory=dict)
    # event comparisons: per-fold L1 distance between predicted and observed histograms
    l1_errors: dict[str, list[float]] = Field(default_factory=dict)

    def matrix(self) -> dict[str, dict[str, PairwiseTest | None]]:
        """Pairwise results keyed ``[a][b]``; the diagonal is ``None``."""
        table: dict[str, dict[str, PairwiseTest | None]] = {m: dict.fromkeys(self.methods) for m in self.methods}
        for test in self.tests:
            table[test.a][test.b] = test
        return table


class SweepResult(BaseModel):
    """Validation RMSE per parameter and the winner (smallest parameter on ties)."""

    best: int
    scores: dict[int, float]
    skipped: list[int] = Field(default_factory=list)


class EvaluationConfig(BaseModel):
    """Parameter ranges and grids for the method comparison."""

    hist_intervals: list[int] = Field(default_factory=lambda: [1, 2, 4, 6, 12, 24, 48])
    fremen_orders: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    clusters: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    validation_fraction: float = Field(default=0.25, gt=0, lt=1)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    grid_spatial: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2])
    grid_temporal: list[float] = Field(default_factory=lambda: [300.0, 900.0, 1800.0])
    subsample: int = Field(default=1, ge=1)
    clamp: tuple[float, float] | None = None

    @field_validator("hist_intervals", "fremen_orders", "clusters", "grid_spatial", "grid_temporal")
    @classmethod
    def _non_empty(cls, values: list) -> list:
        if not values:
            raise ValueError("parameter ranges must not be empty")
        return values


class RunConfig(BaseModel):
    """Settings shared by the command-line commands; filled from defaults, a config file, then flags."""

    mode: Mode | None = None
    backend: Backend = "em"
    clusters: int | Literal["auto"] = 3
    max_h: int = Field(default=5, ge=0)
    longest_period: float = Field(default=WEEK, gt=0)
    candidates: int = Field(default=168, ge=1)
    seed: int = 42
    grid_spatial: list[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2])
    grid_temporal: list[float] = Field(default_factory=lambda: [300.0, 900.0, 1800.0])
    hist_intervals: list[int] = Field(default_factory=lambda: [1, 2, 4, 6, 12, 24, 48])
    fremen_orders: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4, 5])
    sweep_clusters: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5])
    clamp: tuple[float, float] | None = None
    alpha: float = Field(default=0.05, gt=0, lt=1)

    def build_config(self) -> BuildConfig:
        auto = self.clusters == "auto"
        fit = FitConfig(
            n_clusters=1 if auto else int(self.clusters),
            seed=self.seed,
            backend="km" if auto else self.backend,
        )
        return BuildConfig(
            fit=fit,
            spectral=SpectralConfig(longest_period=self.longest_period, candidate_count=self.candidates),
            max_h=self.max_h,
            auto_clusters=auto,
        )

    def evaluation_config(self) -> EvaluationConfig:
        return EvaluationConfig(
            hist_intervals=self.hist_intervals,
            fremen_orders=self.fremen_orders,
            clusters=self.sweep_clusters,
            alpha=self.alpha,
            grid_spatial=self.grid_spatial,
            grid_temporal=self.grid_temporal,
            clamp=self.clamp,
        )
