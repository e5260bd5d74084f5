"""File I/O for increments, estimates, curves and JSON sidecars."""

import json
import logging
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from core.errors import StorageError
from models.schemas import DensityEstimate

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

INCREMENT_COLUMN = "increment"


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(f"Cannot create directory for {path}: {e}", path=str(path)) from e
    return path


def write_table_csv(path: PathLike, columns: dict[str, Any]) -> Path:
    """Write equal-length columns, in the given order, as CSV."""
    path = _prepare(path)
    try:
        pd.DataFrame({name: np.asarray(values) for name, values in columns.items()}).to_csv(
            path, index=False, lineterminator="\n"
        )
    except (OSError, ValueError) as e:
        raise StorageError(f"Error writing {path}: {e}", path=str(path)) from e
    logger.debug("Wrote %s", path)
    return path


def read_increments_csv(path: PathLike) -> np.ndarray:
    """Read the `increment` column (or the only column) of a CSV file."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError as e:
        raise StorageError(f"Increments file not found: {path}", path=str(path)) from e
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise StorageError(f"Error reading {path}: {e}", path=str(path)) from e

    if INCREMENT_COLUMN in frame.columns:
        column = frame[INCREMENT_COLUMN]
    elif len(frame.columns) == 1:
        column = frame.iloc[:, 0]
    else:
        raise StorageError(f"{path} has no '{INCREMENT_COLUMN}' column", path=str(path))

    values = pd.to_numeric(column, errors="coerce").to_numpy(dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise StorageError(f"{path} contains non-numeric or non-finite increments", path=str(path))
    return values


def write_increments_csv(path: PathLike, increments) -> Path:
    """One row per Δ-slot, zeros included."""
    return write_table_csv(path, {INCREMENT_COLUMN: increments})


def write_jumps_csv(path: PathLike, times, sizes) -> Path:
    return write_table_csv(path, {"time": times, "size": sizes})


def write_estimate_csv(path: PathLike, estimate: DensityEstimate) -> Path:
    """Columns x, f_hat on the estimation mesh."""
    return write_table_csv(path, {"x": estimate.grid, "f_hat": estimate.values})


def write_json(path: PathLike, payload: Union[BaseModel, dict]) -> Path:
    """Pretty-printed JSON; pydantic models go through their own serializer."""
    path = _prepare(path)
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2)
    else:
        text = json.dumps(payload, indent=2)
    try:
        path.write_text(text + "\n", encoding="utf-8")
    except OSError as e:
        raise StorageError(f"Error writing {path}: {e}", path=str(path)) from e
    logger.debug("Wrote %s", path)
    return path


def read_json(path: PathLike) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise StorageError(f"File not found: {path}", path=str(path)) from e
    except (OSError, json.JSONDecodeError) as e:
        raise StorageError(f"Error reading {path}: {e}", path=str(path)) from e
