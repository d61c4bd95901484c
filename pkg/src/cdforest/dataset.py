"""Training data container and CSV ingestion."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DatasetError(ValueError):
    """Raised when a CSV file cannot be turned into a Dataset."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """n observations of a d-dimensional feature vector and a scalar response.

    Arrays are copied to float64 and flagged read-only, so a Dataset can be
    shared between concurrent tree builders.
    """

    features: np.ndarray
    responses: np.ndarray
    feature_names: tuple[str, ...] | None = None
    response_name: str | None = None

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64, order="C")
        y = np.array(self.responses, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "responses", y)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.features.shape == other.features.shape
            and self.responses.shape == other.responses.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.responses, other.responses)
        )

    def __hash__(self):
        return id(self)


def validate(ds: Dataset) -> list[str]:
    """Return every invariant violation of `ds`, empty when all hold."""
    problems = []
    X, y = ds.features, ds.responses
    if X.ndim != 2:
        problems.append(f"features must be 2-dimensional, got {X.ndim} dimensions")
        return problems
    if y.ndim != 1:
        problems.append(f"responses must be 1-dimensional, got {y.ndim} dimensions")
        return problems
    if X.shape[0] != y.shape[0]:
        problems.append(
            f"length mismatch: {X.shape[0]} feature rows vs {y.shape[0]} responses"
        )
    if y.shape[0] < 1:
        problems.append("dataset is empty (n = 0)")
    if X.shape[1] < 1:
        problems.append("dataset has no feature columns (d = 0)")
    for row, col in zip(*np.nonzero(~np.isfinite(X))):
        problems.append(f"non-finite feature value {X[row, col]!r} at (row {row}, column {col})")
    for row in np.flatnonzero(~np.isfinite(y)):
        problems.append(f"non-finite response value {y[row]!r} at row {row}")
    return problems


def _resolve_response_column(response_column, header: list[str] | None, ncols: int) -> int:
    if header is not None and isinstance(response_column, str) and not response_column.lstrip("-").isdigit():
        if response_column not in header:
            raise DatasetError(f"response column {response_column!r} not found in header {header}")
        return header.index(response_column)
    try:
        index = int(response_column)
    except (TypeError, ValueError):
        raise DatasetError(
            f"response column {response_column!r} must be an index when the file has no header"
        ) from None
    if index < 0:
        index += ncols
    if not 0 <= index < ncols:
        raise DatasetError(f"response column index {response_column} out of range for {ncols} columns")
    return index


def read_matrix(path: str | os.PathLike, has_header: bool = True) -> tuple[list[str] | None, np.ndarray]:
    """Parse a numeric CSV into (header, float64 matrix).

    Every row must have the same number of cells and every cell must parse
    as a float; errors name the 1-based file line and the 0-based column.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DatasetError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DatasetError(f"empty file: {path}")
    header = None
    first_line = 1
    if has_header:
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
        first_line = 2
        if not rows:
            raise DatasetError(f"file has a header but no data rows: {path}")
    ncols = len(header) if header is not None else len(rows[0])
    out = np.empty((len(rows), ncols), dtype=np.float64)
    for i, row in enumerate(rows):
        line = i + first_line
        if len(row) != ncols:
            raise DatasetError(f"line {line}: expected {ncols} cells, found {len(row)}")
        for j, cell in enumerate(row):
            text = cell.strip()
            if not text:
                raise DatasetError(f"line {line}, column {j}: missing value")
            try:
                out[i, j] = float(text)
            except ValueError:
                raise DatasetError(f"line {line}, column {j}: cannot parse {cell!r} as a number") from None
    return header, out


def load_csv(
    path: str | os.PathLike,
    response_column: str | int = -1,
    has_header: bool = True,
) -> Dataset:
    """Load a Dataset from CSV.

    Parameters
    ----------
    path : path-like
        Comma-separated UTF-8 file, one observation per row.
    response_column : str or int
        Header name of the response column, or its 0-based index (negative
        indices count from the end). Defaults to the last column.
    has_header : bool
        Whether the first row holds column names.
    """
    header, table = read_matrix(path, has_header=has_header)
    ncols = table.shape[1]
    if ncols < 2:
        raise DatasetError(f"need at least one feature column and a response column, found {ncols} column(s)")
    col = _resolve_response_column(response_column, header, ncols)
    keep = [j for j in range(ncols) if j != col]
    ds = Dataset(
        features=table[:, keep],
        responses=table[:, col],
        feature_names=tuple(header[j] for j in keep) if header else None,
        response_name=header[col] if header else None,
    )
    problems = validate(ds)
    if problems:
        raise DatasetError(f"{path}: " + "; ".join(problems))
    return ds


def _fmt(v: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(v))


def save_csv(ds: Dataset, path: str | os.PathLike, header: bool = True) -> None:
    """Write `ds` with features first and the response in the last column."""
    names = ds.feature_names or tuple(f"x{j + 1}" for j in range(ds.d))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([*names, ds.response_name or "y"])
        for xrow, yv in zip(ds.features, ds.responses):
            w.writerow([*map(_fmt, xrow), _fmt(yv)])


def write_rows(path: str | os.PathLike, header: Sequence[str], rows) -> None:
    """Write a list of tuples as CSV, formatting floats losslessly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])

