"""Reference predictors that ignore space: Mean, Hist_n, FreMEn_m and Zero."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import override

import numpy as np

from dartfx.hypertime.dataset import Dataset
from dartfx.hypertime.errors import ModelError
from dartfx.hypertime.model import DAY, BaselineConfig
from dartfx.hypertime.spectral import ResidualSeries, default_candidates, fourier_coefficients, spectrum

logger = logging.getLogger(__name__)


class Predictor(ABC):
    """A trained model answering value queries at timestamps (and, optionally, locations)."""

    @property
    @abstractmethod
    def name(self) -> str: ...

    @abstractmethod
    def predict(self, times: np.ndarray | Sequence[float], coords: np.ndarray | None = None) -> np.ndarray:
        """Predicted values, one per timestamp."""

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


def _training_values(train: Dataset) -> np.ndarray:
    if train.values is None:
        raise ModelError("baselines need a valued training set")
    if not len(train):
        raise ModelError("cannot train a baseline on an empty dataset")
    return train.values


class MeanPredictor(Predictor):
    def __init__(self, mean: float):
        self.mean = float(mean)

    @property
    def name(self) -> str:
        return "Mean"

    @override
    def predict(self, times, coords=None) -> np.ndarray:
        return np.full(np.asarray(times, dtype=float).reshape(-1).size, self.mean)


class ZeroPredictor(Predictor):
    @property
    def name(self) -> str:
        return "Zero"

    @override
    def predict(self, times, coords=None) -> np.ndarray:
        return np.zeros(np.asarray(times, dtype=float).reshape(-1).size)


def _interval_index(times: np.ndarray, n_intervals: int) -> np.ndarray:
    index = np.floor(n_intervals * np.mod(times, DAY) / DAY).astype(int)
    return np.clip(index, 0, n_intervals - 1)


class HistPredictor(Predictor):
    """Average of the training values falling in the same 1/n-th of the (UTC) day."""

    def __init__(self, n_intervals: int, profile: np.ndarray):
        self.n_intervals = n_intervals
        self.profile = np.asarray(profile, dtype=float)

    @property
    def name(self) -> str:
        return f"Hist_{self.n_intervals}"

    @override
    def predict(self, times, coords=None) -> np.ndarray:
        times = np.asarray(times, dtype=float).reshape(-1)
        return self.profile[_interval_index(times, self.n_intervals)]


class FreMEnPredictor(Predictor):
    """Mean plus the ``m`` strongest periodic components of the training series."""

    def __init__(self, mean: float, periods: Sequence[float], coefficients: np.ndarray):
        self.mean = float(mean)
        self.periods = np.asarray(periods, dtype=float)
        self.coefficients = np.asarray(coefficients, dtype=complex)

    @property
    def name(self) -> str:
        return f"FreMEn_{self.periods.size}"

    @override
    def predict(self, times, coords=None) -> np.ndarray:
        times = np.asarray(times, dtype=float).reshape(-1)
        out = np.full(times.size, self.mean)
        for period, coefficient in zip(self.periods, self.coefficients, strict=True):
            phase = 2.0 * np.pi * times / period
            out += 2.0 * (coefficient.real * np.cos(phase) - coefficient.imag * np.sin(phase))
        return out


def mean_predictor(train: Dataset) -> MeanPredictor:
    return MeanPredictor(_training_values(train).mean())


def hist_predictor(train: Dataset, n_intervals: int) -> HistPredictor:
    """Split each day into ``n_intervals`` slots; slots without training data predict the global mean."""
    values = _training_values(train)
    if n_intervals < 1:
        raise ModelError(f"Hist needs at least one interval, got {n_intervals}")
    index = _interval_index(train.times, n_intervals)
    order = np.argsort(index, kind="stable")
    bounds = np.searchsorted(index[order], np.arange(n_intervals + 1))
    profile = np.full(n_intervals, values.mean())
    for k in range(n_intervals):
        if bounds[k + 1] > bounds[k]:
            profile[k] = values[order[bounds[k] : bounds[k + 1]]].mean()
    return HistPredictor(n_intervals, profile)


def fremen_predictor(
    train: Dataset,
    m_components: int,
    candidates: Sequence[float] | None = None,
) -> FreMEnPredictor:
    """
    Keep the ``m_components`` candidate periods with the largest amplitudes.

    Args:
        train: Valued training set; locations are ignored.
        m_components: Number of periodic components (0 reduces to the mean).
        candidates: Candidate periods; a week and its first 168 harmonics by default.
    """
    values = _training_values(train)
    if m_components < 0:
        raise ModelError(f"FreMEn order must be non-negative, got {m_components}")
    series = ResidualSeries(times=train.times, values=values)
    if m_components == 0:
        return FreMEnPredictor(values.mean(), [], [])
    candidates = list(candidates) if candidates is not None else default_candidates()
    chosen = [entry.period for entry in spectrum(series, candidates).entries[:m_components]]
    logger.debug("FreMEn_%d periods: %s", m_components, chosen)
    return FreMEnPredictor(values.mean(), chosen, fourier_coefficients(series, chosen))


def fit_baseline(cfg: BaselineConfig, train: Dataset, candidates: Sequence[float] | None = None) -> Predictor:
    """Train the baseline named by ``cfg.kind``."""
    if cfg.kind == "mean":
        return mean_predictor(train)
    if cfg.kind == "hist":
        return hist_predictor(train, cfg.n_intervals)
    if cfg.kind == "fremen":
        return fremen_predictor(train, cfg.m_components, candidates)
    return ZeroPredictor()
