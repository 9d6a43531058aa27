"""Projection of linear time onto circular hypertime coordinates."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from dartfx.hypertime.dataset import Dataset
from dartfx.hypertime.errors import DatasetError
from dartfx.hypertime.model import DimensionLayout, HypertimeProjection


def _periods(projection: HypertimeProjection | Sequence[float]) -> np.ndarray:
    if isinstance(projection, HypertimeProjection):
        return np.asarray(projection.periods, dtype=float)
    return np.asarray(HypertimeProjection(periods=list(projection)).periods, dtype=float)


def project_time(t: float | np.ndarray, projection: HypertimeProjection | Sequence[float]) -> np.ndarray:
    """
    Map timestamps to ``(cos 2πt/T_k, sin 2πt/T_k)`` pairs in period order.

    A scalar ``t`` yields a vector of length 2h; an array of shape (l,) yields shape (l, 2h).
    """
    periods = _periods(projection)
    times = np.asarray(t, dtype=float)
    phase = 2.0 * np.pi * times[..., None] / periods
    out = np.empty((*times.shape, 2 * periods.size))
    out[..., 0::2] = np.cos(phase)
    out[..., 1::2] = np.sin(phase)
    return out


def extend_vectors(
    vectors: np.ndarray | Sequence[Sequence[float]],
    times: Sequence[float] | np.ndarray,
    period: float,
) -> np.ndarray:
    """Append ``(cos 2πt_i/T, sin 2πt_i/T)`` to every vector."""
    times = np.asarray(times, dtype=float).reshape(-1)
    vectors = np.asarray(vectors, dtype=float)
    if vectors.size == 0 and times.size == 0:
        width = vectors.shape[1] if vectors.ndim == 2 else 0
        return np.zeros((0, width + 2))
    vectors = vectors.reshape(times.size, -1) if vectors.ndim == 1 else vectors
    if vectors.shape[0] != times.size:
        raise DatasetError(f"{vectors.shape[0]} vectors but {times.size} timestamps")
    return np.hstack([vectors, project_time(times, [period])])


def assemble(dataset: Dataset, projection: HypertimeProjection) -> tuple[np.ndarray, DimensionLayout]:
    """Stack ``(a_i, x_i, hypertime(t_i))`` rows and describe where each part lives."""
    if not len(dataset):
        raise DatasetError("cannot assemble vectors from an empty dataset")
    parts = []
    if dataset.values is not None:
        parts.append(dataset.values[:, None])
    parts.append(dataset.coords)
    parts.append(project_time(dataset.times, projection))
    layout = DimensionLayout.create(dataset.values is not None, dataset.spatial_dim, projection.h)
    return np.hstack(parts), layout
