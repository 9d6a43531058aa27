"""
Seeded generators of datasets with known periodic structure.

All generators start at ``start`` seconds of the epoch (a Thursday, midnight UTC) and return
time-sorted :class:`~dartfx.hypertime.dataset.Dataset` objects.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from dartfx.hypertime.dataset import Dataset
from dartfx.hypertime.errors import DatasetError
from dartfx.hypertime.model import DAY, WEEK

HOUR = 3600.0


def _grid_times(duration: float, step: float, start: float) -> np.ndarray:
    if not (duration > 0 and step > 0):
        raise DatasetError("duration and step must be positive")
    return start + np.arange(0.0, duration, step)


def daily_rhythm(
    weeks: float = 3,
    step: float = 600.0,
    noise: float = 0.1,
    seed: int = 42,
    start: float = 0.0,
    hours: tuple[float, float] = (8.0, 18.0),
) -> Dataset:
    """``a = 1`` between ``hours`` every day, else 0, plus Gaussian noise; no spatial coordinates."""
    rng = np.random.default_rng(seed)
    times = _grid_times(weeks * WEEK, step, start)
    hour = np.mod(times, DAY) / HOUR
    values = ((hour >= hours[0]) & (hour < hours[1])).astype(float) + rng.normal(0.0, noise, times.size)
    return Dataset(times=times, coords=np.zeros((times.size, 0)), values=values)


def daily_weekly(
    weeks: float = 4,
    step: float = 600.0,
    noise: float = 0.1,
    seed: int = 42,
    start: float = 0.0,
    base: float = 2.0,
    weekly: float = 0.8,
    daily: float = 0.5,
) -> Dataset:
    """Positive level with a weekly and a daily cosine component plus noise."""
    rng = np.random.default_rng(seed)
    times = _grid_times(weeks * WEEK, step, start)
    values = (
        base
        + weekly * np.cos(2 * np.pi * times / WEEK)
        + daily * np.cos(2 * np.pi * times / DAY)
        + rng.normal(0.0, noise, times.size)
    )
    return Dataset(times=times, coords=np.zeros((times.size, 0)), values=values)


def daily_cosine(
    days: float = 14,
    step: float = 300.0,
    offset: float = 0.5,
    amplitude: float = 0.5,
    start: float = 0.0,
) -> Dataset:
    """Noise-free ``offset + amplitude·cos(2πt/day)``."""
    times = _grid_times(days * DAY, step, start)
    values = offset + amplitude * np.cos(2 * np.pi * times / DAY)
    return Dataset(times=times, coords=np.zeros((times.size, 0)), values=values)


def door_state(
    weeks: float = 3,
    step: float = 600.0,
    seed: int = 42,
    start: float = 0.0,
    p_open: float = 0.9,
    p_closed: float = 0.05,
) -> Dataset:
    """Binary door state: mostly open 08:00-18:00 on weekdays, mostly closed otherwise."""
    rng = np.random.default_rng(seed)
    times = _grid_times(weeks * WEEK, step, start)
    hour = np.mod(times, DAY) / HOUR
    weekday = (np.floor(times / DAY).astype(int) + 3) % 7  # epoch day 0 is a Thursday
    busy = (hour >= 8.0) & (hour < 18.0) & (weekday < 5)
    values = (rng.random(times.size) < np.where(busy, p_open, p_closed)).astype(float)
    return Dataset(times=times, coords=np.zeros((times.size, 0)), values=values)


def spatial_blobs(
    centers: Sequence[Sequence[float]] = ((0.0, 0.0), (4.0, 0.0), (0.0, 4.0)),
    levels: Sequence[float] = (1.0, 2.0, 3.0),
    per_blob: int = 200,
    spread: float = 0.3,
    noise: float = 0.05,
    weeks: float = 2,
    seed: int = 42,
    start: float = 0.0,
) -> Dataset:
    """Time-independent values: each blob of locations carries its own level."""
    if len(centers) != len(levels):
        raise DatasetError("every blob needs a level")
    rng = np.random.default_rng(seed)
    coords = np.vstack([rng.normal(c, spread, (per_blob, len(c))) for c in centers])
    values = np.repeat(np.asarray(levels, dtype=float), per_blob) + rng.normal(0.0, noise, coords.shape[0])
    times = start + rng.uniform(0.0, weeks * WEEK, coords.shape[0])
    order = np.argsort(times, kind="stable")
    return Dataset(times=times[order], coords=coords[order], values=values[order])


def linear_field(
    count: int = 1500,
    weeks: float = 2,
    noise: float = 0.05,
    seed: int = 42,
    start: float = 0.0,
) -> Dataset:
    """``a = 1 + x`` for x uniform in [0, 1], sampled at random times; no temporal structure."""
    rng = np.random.default_rng(seed)
    times = np.sort(start + rng.uniform(0.0, weeks * WEEK, count))
    x = rng.uniform(0.0, 1.0, (count, 1))
    return Dataset(times=times, coords=x, values=1.0 + x[:, 0] + rng.normal(0.0, noise, count))


def _modulated_times(
    rng: np.random.Generator, duration: float, rate: float, depth: float, peak_hour: float, start: float
) -> np.ndarray:
    # thinning of a homogeneous Poisson process
    count = rng.poisson(rate * duration * (1.0 + depth))
    times = rng.uniform(0.0, duration, count)
    intensity = 1.0 + depth * np.cos(2 * np.pi * (times - peak_hour * HOUR) / DAY)
    keep = rng.random(count) * (1.0 + depth) < intensity
    return np.sort(start + times[keep])


def pedestrian_events(
    days: float = 7,
    rate_per_hour: float = 6.0,
    depth: float = 0.9,
    peak_hour: float = 13.0,
    centers: Sequence[Sequence[float]] = ((0.6, 0.6), (1.4, 1.4)),
    spread: float = 0.2,
    seed: int = 42,
    start: float = 0.0,
) -> Dataset:
    """Detections around a few hot spots with a daily rhythm in their rate."""
    rng = np.random.default_rng(seed)
    times = _modulated_times(rng, days * DAY, rate_per_hour / HOUR, depth, peak_hour, 0.0) + start
    centers_array = np.asarray(centers, dtype=float)
    which = rng.integers(centers_array.shape[0], size=times.size)
    coords = centers_array[which] + rng.normal(0.0, spread, (times.size, centers_array.shape[1]))
    return Dataset(times=times, coords=coords)


def uniform_events(
    days: float = 14,
    rate_per_hour: float = 8.0,
    depth: float = 0.9,
    peak_hour: float = 13.0,
    size: float = 2.0,
    seed: int = 42,
    start: float = 0.0,
) -> Dataset:
    """Detections spread uniformly over a square with a daily rhythm in their rate."""
    rng = np.random.default_rng(seed)
    times = _modulated_times(rng, days * DAY, rate_per_hour / HOUR, depth, peak_hour, 0.0) + start
    return Dataset(times=times, coords=rng.uniform(0.0, size, (times.size, 2)))


GENERATORS = {
    "daily": daily_rhythm,
    "daily-weekly": daily_weekly,
    "door": door_state,
    "blobs": spatial_blobs,
    "field": linear_field,
    "pedestrian": pedestrian_events,
    "uniform": uniform_events,
}

# generators sized in days rather than weeks
_DAILY = {"pedestrian", "uniform"}


def generate(kind: str, weeks: float, seed: int = 42, start: float = 0.0) -> Dataset:
    """Draw ``weeks`` of data from the named generator."""
    if kind not in GENERATORS:
        raise DatasetError(f"unknown generator '{kind}', expected one of {sorted(GENERATORS)}")
    if kind in _DAILY:
        return GENERATORS[kind](days=7 * weeks, seed=seed, start=start)
    return GENERATORS[kind](weeks=weeks, seed=seed, start=start)


def folds(kind: str, train_weeks: float, n_folds: int, seed: int = 42) -> tuple[Dataset, list[Dataset]]:
    """
    A training set followed by ``n_folds`` one-week test sets of the same generator.

    Every part is drawn with its own seed derived from ``seed``.
    """
    train = generate(kind, train_weeks, seed)
    tests = [generate(kind, 1, seed + k, (train_weeks + k - 1) * WEEK) for k in range(1, n_folds + 1)]
    return train, tests
