"""
Utility functions for the variational boundary value solver.
Provides finite-difference steps, lossless CSV output and log summaries.
"""

import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from varbvp.config import FD_RELATIVE_STEP
from varbvp.errors import InvalidConfig

logger = logging.getLogger(__name__)

# 17 significant digits round-trip every double exactly
CSV_FLOAT_FORMAT = "%.17g"


def fd_steps(x: np.ndarray, relative: float = FD_RELATIVE_STEP) -> np.ndarray:
    """Component-wise finite-difference steps relative*(1+|x|)."""
    return relative * (1.0 + np.abs(np.asarray(x, dtype=float)))


def as_vector(value: Union[float, Sequence[float], np.ndarray], dim: int, name: str) -> np.ndarray:
    """
    Coerce a scalar or sequence to a float vector of length dim.
    Scalars are broadcast; anything else must already have length dim.
    """
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.shape == (1,) and dim > 1:
        arr = np.full(dim, arr[0])
    if arr.shape != (dim,):
        raise InvalidConfig(f"{name} must have {dim} components, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidConfig(f"{name} must be finite, got {arr}")
    return arr


def csv_text(header: List[str], rows: np.ndarray) -> str:
    """Render rows as CSV text with full double precision."""
    buffer = io.StringIO()
    np.savetxt(
        buffer,
        np.atleast_2d(rows),
        delimiter=",",
        header=",".join(header),
        comments="",
        fmt=CSV_FLOAT_FORMAT,
    )
    return buffer.getvalue()


def write_csv(path: Path, header: List[str], rows: np.ndarray) -> None:
    """
    Write a CSV file atomically (write to temp, then rename).
    Identical inputs produce byte-identical files. An unwritable path
    raises InvalidConfig.
    """
    path = Path(path)
    text = csv_text(header, rows)
    temp_path = None
    try:
        fd, temp_path = tempfile.mkstemp(suffix=".csv", dir=path.parent)
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(temp_path, path)
    except OSError as e:
        if temp_path is not None and os.path.exists(temp_path):
            os.unlink(temp_path)
        raise InvalidConfig(f"cannot write {path}: {e}") from e
    logger.info(f"Wrote {np.atleast_2d(rows).shape[0]} rows to {path}")


def read_csv(path: Path) -> Tuple[List[str], np.ndarray]:
    """Read a CSV written by write_csv; returns (header, 2-d array)."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def format_summary_log(title: str, entries: Dict[str, object]) -> str:
    """
    Format a summary log message for the end of a run.
    """
    width = max((len(k) for k in entries), default=0) + 2
    lines = ["=" * 50, title, "=" * 50]
    for key, value in entries.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        lines.append(f"{key + ':':<{width}}{value}")
    lines.append("=" * 50)
    return "\n".join(lines)
