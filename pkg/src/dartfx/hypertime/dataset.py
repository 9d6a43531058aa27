"""Ingestion, validation, splitting and standardization of timestamped measurements."""

from __future__ import annotations

import logging
import math
import os
import re
from collections.abc import Iterable, Iterator
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dartfx.hypertime.errors import DatasetError
from dartfx.hypertime.model import Mode, SpatialStats

logger = logging.getLogger(__name__)

_SPATIAL_COLUMN_RE = re.compile(r"^x(\d+)$")


class Measurement(BaseModel):
    """One observation: value ``a`` (absent in event mode), coordinates ``x`` and timestamp ``t``."""

    t: float
    x: list[float] = Field(default_factory=list)
    a: float | None = None

    @model_validator(mode="after")
    def _check_finite(self) -> Measurement:
        if not math.isfinite(self.t) or any(not math.isfinite(v) for v in self.x):
            raise ValueError("timestamps and coordinates must be finite")
        if self.a is not None and not math.isfinite(self.a):
            raise ValueError("value must be finite")
        return self


class Dataset(BaseModel):
    """Immutable column-oriented collection of measurements sharing mode and spatial dimension."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    times: np.ndarray
    coords: np.ndarray
    values: np.ndarray | None = None

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        times = np.array(data.get("times", []), dtype=float).reshape(-1)
        coords = data.get("coords")
        coords = np.zeros((times.size, 0)) if coords is None else np.array(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords.reshape(times.size, -1) if times.size else coords.reshape(0, -1)
        values = data.get("values")
        if values is not None:
            values = np.array(values, dtype=float).reshape(-1)
        for array in (times, coords, values):
            if array is not None:
                array.setflags(write=False)
        return {"times": times, "coords": coords, "values": values}

    @model_validator(mode="after")
    def _check(self) -> Dataset:
        if self.coords.ndim != 2 or self.coords.shape[0] != self.times.size:
            raise DatasetError(f"coordinates must have shape (l, d_s) with l={self.times.size}")
        if self.values is not None and self.values.size != self.times.size:
            raise DatasetError("every record of a valued dataset needs a value")
        if not np.all(np.isfinite(self.times)) or not np.all(np.isfinite(self.coords)):
            raise DatasetError("timestamps and coordinates must be finite")
        if self.values is not None and not np.all(np.isfinite(self.values)):
            raise DatasetError("values must be finite")
        return self

    @classmethod
    def from_measurements(cls, records: Iterable[Measurement]) -> Dataset:
        records = list(records)
        if not records:
            return cls(times=[], coords=np.zeros((0, 0)))
        dims = {len(r.x) for r in records}
        if len(dims) != 1:
            raise DatasetError(f"records disagree on spatial dimension: {sorted(dims)}")
        valued = {r.a is not None for r in records}
        if len(valued) != 1:
            raise DatasetError("records mix valued and event measurements")
        coords = np.array([r.x for r in records], dtype=float).reshape(len(records), dims.pop())
        values = [r.a for r in records] if valued.pop() else None
        return cls(times=[r.t for r in records], coords=coords, values=values)

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def size(self) -> int:
        return len(self)

    @property
    def spatial_dim(self) -> int:
        return int(self.coords.shape[1])

    @property
    def mode(self) -> Mode:
        return "event" if self.values is None else "valued"

    @property
    def duration(self) -> float:
        if not len(self):
            return 0.0
        return float(self.times.max() - self.times.min())

    def records(self) -> Iterator[Measurement]:
        for i in range(len(self)):
            value = None if self.values is None else float(self.values[i])
            yield Measurement(t=float(self.times[i]), x=self.coords[i].tolist(), a=value)

    def subset(self, mask: np.ndarray) -> Dataset:
        values = None if self.values is None else self.values[mask]
        return Dataset(times=self.times[mask], coords=self.coords[mask], values=values)

    def with_values(self, values: np.ndarray | None) -> Dataset:
        return Dataset(times=self.times, coords=self.coords, values=values)


class CsvSchema(BaseModel):
    """Column mapping for :func:`load_csv`.

    With a header row the names ``t``, ``a`` and ``x1``.. are authoritative. Headerless files are
    read positionally using ``columns`` (or ``t, a, x1..`` for valued / ``t, x1..`` for event mode).
    """

    has_header: bool = True
    columns: list[str] | None = None
    time_column: str = "t"
    value_column: str = "a"
    mode: Mode | None = None


def _resolve_columns(names: list[str], schema: CsvSchema, path: str) -> tuple[str, str | None, list[str]]:
    time_column = schema.time_column if schema.time_column in names else names[0]
    value_column: str | None = schema.value_column if schema.value_column in names else None
    if schema.mode == "event" and value_column is not None:
        raise DatasetError(f"{path}: event mode requested but the file has a '{value_column}' value column")
    if schema.mode == "valued" and value_column is None:
        raise DatasetError(f"{path}: valued mode requested but no '{schema.value_column}' column found")
    rest = [n for n in names if n not in (time_column, value_column)]
    numbered = [n for n in rest if _SPATIAL_COLUMN_RE.match(n)]
    if len(numbered) == len(rest):
        rest = sorted(numbered, key=lambda n: int(_SPATIAL_COLUMN_RE.match(n).group(1)))  # type: ignore[union-attr]
    return time_column, value_column, rest


def _to_float(value: Any) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        return math.nan


def _numeric_column(frame: pd.DataFrame, column: str, path: str, line_offset: int) -> np.ndarray:
    # float() round-trips the shortest repr written by write_csv
    raw = frame[column].astype(object)
    parsed = raw.map(_to_float).to_numpy(dtype=float)
    bad = ~np.isfinite(parsed)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DatasetError(
            f"{path}: line {row + line_offset}: non-numeric or missing value {raw.iloc[row]!r} in column '{column}'"
        )
    return parsed


def load_csv(path: str | os.PathLike[str], schema: CsvSchema | None = None) -> Dataset:
    """
    Read a measurement CSV into a :class:`Dataset` sorted by timestamp.

    Args:
        path: UTF-8 CSV file with ``.`` as decimal separator, one record per line.
        schema: Optional column mapping; required for headerless files with custom column order.

    Returns:
        Dataset: records sorted ascending by ``t`` (stable for duplicate timestamps).

    Raises:
        FileNotFoundError: If the file does not exist.
        DatasetError: If the file is empty or a row is malformed (the message names the line).
    """
    schema = schema or CsvSchema()
    path_str = os.fspath(path)
    if not os.path.exists(path_str):
        raise FileNotFoundError(f"File not found: {path_str}")

    try:
        frame = pd.read_csv(
            path_str,
            header=0 if schema.has_header else None,
            dtype=str,
            keep_default_na=False,
            encoding="utf-8",
            skipinitialspace=True,
        )
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"{path_str}: file is empty") from e
    except pd.errors.ParserError as e:
        raise DatasetError(f"{path_str}: malformed row ({e})") from e

    if frame.empty:
        raise DatasetError(f"{path_str}: file contains no records")

    if schema.has_header:
        frame.columns = [str(c).strip() for c in frame.columns]
        line_offset = 2
    else:
        names = schema.columns
        if names is None:
            head = ["t", "a"] if schema.mode != "event" else ["t"]
            names = head + [f"x{k}" for k in range(1, frame.shape[1] - len(head) + 1)]
        if len(names) != frame.shape[1]:
            raise DatasetError(f"{path_str}: schema names {len(names)} columns but rows have {frame.shape[1]}")
        frame.columns = names
        line_offset = 1

    time_column, value_column, spatial_columns = _resolve_columns(list(frame.columns), schema, path_str)
    # pandas leaves missing trailing fields as NaN, which the numeric check reports as a wrong-arity row
    times = _numeric_column(frame, time_column, path_str, line_offset)
    values = _numeric_column(frame, value_column, path_str, line_offset) if value_column else None
    coords = np.column_stack(
        [_numeric_column(frame, c, path_str, line_offset) for c in spatial_columns]
        or [np.zeros((len(frame), 0))]
    ).reshape(len(frame), len(spatial_columns))

    order = np.argsort(times, kind="stable")
    dataset = Dataset(
        times=times[order],
        coords=coords[order],
        values=None if values is None else values[order],
    )
    logger.debug(
        "Loaded %d records from %s (mode=%s, d_s=%d)", len(dataset), path_str, dataset.mode, dataset.spatial_dim
    )
    return dataset


def dataset_frame(dataset: Dataset) -> pd.DataFrame:
    """Columns in canonical order ``t[,a],x1..``."""
    columns: dict[str, np.ndarray] = {"t": dataset.times}
    if dataset.values is not None:
        columns["a"] = dataset.values
    for k in range(dataset.spatial_dim):
        columns[f"x{k + 1}"] = dataset.coords[:, k]
    return pd.DataFrame(columns)


def write_csv(dataset: Dataset, path: str | os.PathLike[str]) -> str:
    """Write ``dataset`` with the canonical header; floats keep full precision."""
    dataset_frame(dataset).to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    return os.fspath(path)


def split_by_time(dataset: Dataset, boundary: float) -> tuple[Dataset, Dataset]:
    """Split into records with ``t < boundary`` and the rest; both parts must be non-empty."""
    if not len(dataset):
        raise DatasetError("cannot split an empty dataset")
    before = dataset.times < boundary
    if not before.any():
        raise DatasetError(f"boundary {boundary} leaves the first partition empty")
    if before.all():
        raise DatasetError(f"boundary {boundary} leaves the second partition empty")
    return dataset.subset(before), dataset.subset(~before)


def compute_stats(dataset: Dataset) -> SpatialStats:
    """Per-dimension mean and population standard deviation; zero-variance dimensions get std 1."""
    if not len(dataset):
        raise DatasetError("cannot compute statistics of an empty dataset")
    mean = dataset.coords.mean(axis=0)
    std = dataset.coords.std(axis=0)
    degenerate = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if degenerate.any():
        logger.debug("Clamping std of degenerate spatial dimensions %s to 1", np.flatnonzero(degenerate).tolist())
    std = np.where(degenerate, 1.0, std)
    return SpatialStats(mean=mean.tolist(), std=std.tolist())


def standardize_coords(coords: np.ndarray, stats: SpatialStats) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords.reshape(1, -1) if stats.spatial_dim else coords.reshape(-1, 0)
    if coords.shape[1] != stats.spatial_dim:
        raise DatasetError(f"expected {stats.spatial_dim} spatial coordinates, got {coords.shape[1]}")
    return (coords - np.asarray(stats.mean)) / np.asarray(stats.std)


def standardize(dataset: Dataset, stats: SpatialStats) -> Dataset:
    """Replace every coordinate with ``(x - mean) / std``; times and values are untouched."""
    if dataset.spatial_dim != stats.spatial_dim:
        raise DatasetError(f"dataset has {dataset.spatial_dim} spatial dimensions, statistics have {stats.spatial_dim}")
    return Dataset(times=dataset.times, coords=standardize_coords(dataset.coords, stats), values=dataset.values)
