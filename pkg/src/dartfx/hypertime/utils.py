from __future__ import annotations

import logging
import os
import tempfile
from typing import Any, get_origin

import pandas as pd
from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from dartfx.hypertime.errors import HypertimeError, ModelError
from dartfx.hypertime.model import HypertimeModel, RunConfig

logger = logging.getLogger(__name__)


def atomic_write(path: str | os.PathLike[str], content: str, force: bool = False) -> str:
    """
    Write ``content`` to a temporary file next to ``path`` and rename it into place.

    Raises:
        FileExistsError: If ``path`` exists and ``force`` is False.
    """
    path_str = os.fspath(path)
    if os.path.exists(path_str) and not force:
        raise FileExistsError(f"{path_str} already exists (use --force to overwrite)")
    directory = os.path.dirname(os.path.abspath(path_str))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path_str))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(content)
        os.replace(tmp, path_str)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug("Wrote %s", path_str)
    return path_str


def write_json(data: BaseModel, path: str | os.PathLike[str], force: bool = False) -> str:
    return atomic_write(path, data.model_dump_json(indent=2) + "\n", force)


def write_table(frame: pd.DataFrame, path: str | os.PathLike[str], force: bool = False) -> str:
    return atomic_write(path, frame.to_csv(index=False, lineterminator="\n"), force)


def write_heatmap(frame: pd.DataFrame, path: str | os.PathLike[str], force: bool = False) -> str:
    """Space-separated rows with a ``#`` header line, readable by gnuplot."""
    body = frame.to_csv(index=False, header=False, sep=" ", lineterminator="\n")
    return atomic_write(path, "# " + " ".join(frame.columns) + "\n" + body, force)


def save_model(model: HypertimeModel, path: str | os.PathLike[str], force: bool = False) -> str:
    return write_json(model, path, force)


def load_model(path: str | os.PathLike[str]) -> HypertimeModel:
    """
    Read a model file written by :func:`save_model`.

    Raises:
        FileNotFoundError: If the file does not exist.
        ModelError: If the content is not a valid model of a supported format version.
    """
    path_str = os.fspath(path)
    if not os.path.exists(path_str):
        raise FileNotFoundError(f"File not found: {path_str}")
    with open(path_str, encoding="utf-8") as f:
        content = f.read()
    try:
        return HypertimeModel.model_validate_json(content)
    except ValidationError as e:
        first = e.errors()[0]["msg"]
        raise ModelError(f"{path_str}: invalid model file ({e.error_count()} problem(s), first: {first})") from e


def _coerce(name: str, value: str) -> Any:
    annotation = RunConfig.model_fields[name].annotation
    if get_origin(annotation) is list:
        return [v.strip() for v in value.split(",") if v.strip()]
    if name == "clamp":
        lo, _, hi = value.partition(":")
        return (lo.strip(), hi.strip())
    return value.strip()


def load_config(path: str | os.PathLike[str]) -> dict[str, Any]:
    """
    Parse a ``key=value`` file whose keys are :class:`RunConfig` fields.

    Lists are comma separated and the clamp range is ``lo:hi``. Returns only the keys present.
    """
    path_str = os.fspath(path)
    if not os.path.exists(path_str):
        raise FileNotFoundError(f"File not found: {path_str}")
    values: dict[str, Any] = {}
    for key, value in dotenv_values(path_str).items():
        name = key.strip().lower().replace("-", "_")
        if name not in RunConfig.model_fields:
            raise HypertimeError(f"{path_str}: unknown configuration key '{key}'")
        if value is None or not value.strip():
            continue
        values[name] = _coerce(name, value)
    return values
