"""CSV ingestion and emission.

Comma-separated, UTF-8, LF or CRLF, '.' decimal.  A header row is
auto-detected: if any cell of the first row fails to parse as a finite
number, the row is treated as column names.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyInput


def _parse_cell(cell: str) -> float:
    value = float(cell)
    if not np.isfinite(value):
        raise ValueError(f"non-finite value {cell!r}")
    return value


def read_table(path) -> tuple[list[str] | None, np.ndarray]:
    """Read a rectangular numeric CSV; returns (headers_or_None, matrix)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise EmptyInput(f"{path}: file holds no data rows")
    headers = None
    first = rows[0]
    try:
        [_parse_cell(c) for c in first]
    except ValueError:
        headers = [c.strip() for c in first]
        rows = rows[1:]
        if not rows:
            raise EmptyInput(f"{path}: header but no data rows")
    width = len(rows[0])
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DimensionMismatch(f"{path}: row {i + 1} has {len(row)} cells, expected {width}")
        try:
            data[i] = [_parse_cell(c) for c in row]
        except ValueError as exc:
            raise DimensionMismatch(f"{path}: row {i + 1}: {exc}") from None
    return headers, data


def read_matrix(path) -> np.ndarray:
    return read_table(path)[1]


def read_vector(path) -> np.ndarray:
    """Single-column (or single-row) numeric CSV as a 1-D array."""
    data = read_matrix(path)
    if data.shape[1] == 1:
        return data[:, 0]
    if data.shape[0] == 1:
        return data[0]
    raise DimensionMismatch(f"{path}: expected one column, got shape {data.shape}")


def read_assignment(path) -> np.ndarray:
    w = read_vector(path)
    if not np.all((w == 0) | (w == 1)):
        raise DimensionMismatch(f"{path}: assignment entries must be 0 or 1")
    return w.astype(np.int8)


def read_assignment_matrix(path) -> np.ndarray:
    """n-by-B matrix of stacked assignments (one column per draw)."""
    mat = read_matrix(path)
    if not np.all((mat == 0) | (mat == 1)):
        raise DimensionMismatch(f"{path}: assignment entries must be 0 or 1")
    return mat.astype(np.int8)


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    f = float(value)
    return str(int(f)) if f.is_integer() and abs(f) < 1e15 else format(f, ".17g")


def write_table(path, rows, headers=None) -> None:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if headers is not None:
            writer.writerow(headers)
        for row in rows:
            writer.writerow([_format_cell(c) for c in row])


def write_matrix(path, matrix, headers=None) -> None:
    write_table(path, np.atleast_2d(np.asarray(matrix)), headers=headers)


def write_assignment(path, w) -> None:
    write_table(path, [[int(v)] for v in np.asarray(w)])
