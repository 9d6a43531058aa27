"""
Spectral analysis of non-uniformly sampled series.

Amplitudes are evaluated directly from the complex exponential sums over the actual sample times,
so no resampling onto a uniform grid is needed.
"""

from __future__ import annotations

import logging
from collections.abc import Collection, Sequence
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from dartfx.hypertime.errors import SpectralError
from dartfx.hypertime.model import WEEK, SpectrumEntry, SpectrumResult

logger = logging.getLogger(__name__)

# upper bound on samples x candidates evaluated in one block
_BLOCK = 2_000_000


class ResidualSeries(BaseModel):
    """Values ε(t_i) at times t_i, typically model residuals."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: np.ndarray
    values: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = {
                "times": np.array(data.get("times", []), dtype=float).reshape(-1),
                "values": np.array(data.get("values", []), dtype=float).reshape(-1),
            }
            data["times"].setflags(write=False)
            data["values"].setflags(write=False)
        return data

    @model_validator(mode="after")
    def _check(self) -> ResidualSeries:
        if self.times.size != self.values.size:
            raise SpectralError(f"{self.times.size} timestamps but {self.values.size} values")
        if self.times.size < 1:
            raise SpectralError("a series needs at least one sample")
        if not (np.all(np.isfinite(self.times)) and np.all(np.isfinite(self.values))):
            raise SpectralError("series contains non-finite samples")
        return self

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def mean(self) -> float:
        return float(self.values.mean())


def default_candidates(longest: float = WEEK, count: int = 168) -> list[float]:
    """Harmonics ``longest / k`` for k = 1..count (a week down to an hour by default)."""
    if not longest > 0:
        raise SpectralError(f"longest period must be positive, got {longest}")
    if count < 1:
        raise SpectralError(f"candidate count must be at least 1, got {count}")
    return [longest / k for k in range(1, count + 1)]


def fourier_coefficients(series: ResidualSeries, periods: Sequence[float] | np.ndarray) -> np.ndarray:
    """``(1/l) Σ_i (ε_i - ε̄) e^{-j2πt_i/T_k}`` for every period T_k."""
    periods = np.asarray(periods, dtype=float).reshape(-1)
    if np.any(periods <= 0):
        raise SpectralError("periods must be positive")
    centered = series.values - series.mean
    times = series.times
    out = np.empty(periods.size, dtype=complex)
    step = max(1, _BLOCK // max(1, times.size))
    for start in range(0, periods.size, step):
        block = periods[start : start + step]
        phase = 2.0 * np.pi * times[:, None] / block[None, :]
        real = centered @ np.cos(phase)
        imag = -(centered @ np.sin(phase))
        out[start : start + step] = (real + 1j * imag) / times.size
    return out


def amplitudes(series: ResidualSeries, periods: Sequence[float] | np.ndarray) -> np.ndarray:
    return np.abs(fourier_coefficients(series, periods))


def amplitude(series: ResidualSeries, period: float) -> float:
    """Normalized magnitude of the mean-centred series' component at ``period``."""
    return float(amplitudes(series, [period])[0])


def spectrum(series: ResidualSeries, candidates: Sequence[float]) -> SpectrumResult:
    """Amplitude of every candidate, sorted descending; ties go to the larger period."""
    if not len(candidates):
        raise SpectralError("at least one candidate period is required")
    values = amplitudes(series, candidates)
    order = sorted(range(len(candidates)), key=lambda k: (-values[k], -candidates[k]))
    return SpectrumResult(
        entries=[SpectrumEntry(period=float(candidates[k]), amplitude=float(values[k])) for k in order]
    )


def prominent_period(
    series: ResidualSeries,
    candidates: Sequence[float],
    exclude: Collection[float] = (),
) -> float:
    """The non-excluded candidate with the largest amplitude."""
    excluded = set(exclude)
    remaining = [T for T in candidates if T not in excluded]
    if not remaining:
        raise SpectralError("every candidate period is excluded")
    top = spectrum(series, remaining).top
    logger.debug("Most prominent period %.1f s (amplitude %.4g)", top.period, top.amplitude)
    return top.period


def spectral_sum(series: ResidualSeries, candidates: Sequence[float]) -> float:
    """Sum of amplitudes over all candidates (the T_Σ cluster-count criterion)."""
    if not len(candidates):
        raise SpectralError("at least one candidate period is required")
    return float(amplitudes(series, candidates).sum())
