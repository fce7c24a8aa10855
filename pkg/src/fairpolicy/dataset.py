"""Immutable columnar datasets with per-column binary flags, plus CSV I/O."""

from __future__ import annotations

import csv
import io
from typing import Iterable, Mapping

import numpy as np

__all__ = ["Dataset", "DatasetError", "read_csv", "write_csv"]


class DatasetError(ValueError):
    """Malformed dataset construction or I/O input."""


def _is_binary(values: np.ndarray) -> bool:
    return bool(np.all((values == 0.0) | (values == 1.0)))


class Dataset:
    """An immutable table of named float64 columns of equal length.

    Columns whose values all lie in {0, 1} are flagged binary; logit-link
    responses and sensitive/mediator roles require that flag. Instances are
    safe to share across threads: the backing arrays are locked read-only.
    """

    __slots__ = ("_names", "_columns", "_binary", "n_rows")

    def __init__(self, columns: Mapping[str, Iterable[float]] | Iterable[tuple[str, Iterable[float]]]):
        items = list(columns.items()) if isinstance(columns, Mapping) else list(columns)
        if not items:
            raise DatasetError("dataset needs at least one column")
        names = [name for name, _ in items]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DatasetError(f"duplicate column names: {dupes}")
        arrays = {}
        n_rows = None
        for name, values in items:
            arr = np.asarray(values, dtype=np.float64)
            if arr.ndim != 1:
                raise DatasetError(f"column {name!r} is not 1-dimensional")
            if not np.all(np.isfinite(arr)):
                raise DatasetError(f"column {name!r} contains non-finite values")
            if n_rows is None:
                n_rows = arr.shape[0]
            elif arr.shape[0] != n_rows:
                raise DatasetError(
                    f"column {name!r} has {arr.shape[0]} rows, expected {n_rows}"
                )
            arr = arr.copy()
            arr.flags.writeable = False
            arrays[name] = arr
        self._names = tuple(names)
        self._columns = arrays
        self._binary = frozenset(n for n, a in arrays.items() if _is_binary(a))
        self.n_rows = int(n_rows)

    @property
    def column_names(self) -> tuple[str, ...]:
        return self._names

    def __contains__(self, name: str) -> bool:
        return name in self._columns

    def __len__(self) -> int:
        return self.n_rows

    def column(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise DatasetError(f"unknown column {name!r}") from None

    def is_binary(self, name: str) -> bool:
        if name not in self._columns:
            raise DatasetError(f"unknown column {name!r}")
        return name in self._binary

    def with_columns(self, replacements: Mapping[str, Iterable[float]]) -> "Dataset":
        """New dataset with columns replaced or appended (copy-on-write)."""
        merged: dict[str, np.ndarray] = {n: self._columns[n] for n in self._names}
        for name, values in replacements.items():
            arr = np.asarray(values, dtype=np.float64)
            if arr.ndim == 0:
                arr = np.full(self.n_rows, float(arr))
            merged[name] = arr
        return Dataset(merged)

    def select_rows(self, index: np.ndarray) -> "Dataset":
        """New dataset from a row index or boolean mask."""
        return Dataset({n: self._columns[n][index] for n in self._names})

    def replicate_rows(self, times: int) -> "Dataset":
        """Each row repeated `times` consecutive times."""
        if times < 1:
            raise DatasetError("replication factor must be >= 1")
        return Dataset({n: np.repeat(self._columns[n], times) for n in self._names})

    def to_dict(self) -> dict[str, np.ndarray]:
        return {n: self._columns[n] for n in self._names}

    def __repr__(self) -> str:
        return f"Dataset({self.n_rows} rows x {len(self._names)} cols: {', '.join(self._names)})"


def read_csv(path_or_buffer, required_columns: Iterable[str] | None = None) -> Dataset:
    """Read a numeric CSV with a header row into a Dataset.

    Empty cells, ".", and "NA" are rejected with a row/column diagnostic, as
    is any cell that fails float parsing.
    """
    if isinstance(path_or_buffer, io.TextIOBase):
        rows = list(csv.reader(path_or_buffer))
    else:
        with open(path_or_buffer, newline="") as fh:
            rows = list(csv.reader(fh))
    if not rows:
        raise DatasetError("empty CSV: no header row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DatasetError("duplicate names in CSV header")
    data: list[list[float]] = [[] for _ in header]
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DatasetError(f"row {i}: expected {len(header)} cells, got {len(row)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell in ("", ".", "NA", "NaN", "nan"):
                raise DatasetError(f"row {i}, column {header[j]!r}: missing value {cell!r}")
            try:
                data[j].append(float(cell))
            except ValueError:
                raise DatasetError(
                    f"row {i}, column {header[j]!r}: non-numeric cell {cell!r}"
                ) from None
    ds = Dataset({h: np.array(col) for h, col in zip(header, data)})
    if required_columns is not None:
        missing = [c for c in required_columns if c not in ds]
        if missing:
            raise DatasetError(f"CSV is missing required columns: {missing}")
    return ds


def write_csv(data: Dataset, path_or_buffer) -> None:
    """Write a Dataset to CSV with full float precision."""
    names = data.column_names
    cols = [data.column(n) for n in names]

    def _write(fh):
        writer = csv.writer(fh)
        writer.writerow(names)
        for i in range(data.n_rows):
            writer.writerow([repr(float(c[i])) for c in cols])

    if isinstance(path_or_buffer, io.TextIOBase):
        _write(path_or_buffer)
    else:
        with open(path_or_buffer, "w", newline="") as fh:
            _write(fh)
