"""Uniform partitions of the line and sparse empirical cell counts.

Counts are kept as exact int64 arrays; probabilities only appear at read
time as ``count / n``.  Occupied cells are stored sorted, absent cells have
count zero, so memory is proportional to the number of occupied cells.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels

# |x/h| beyond this cannot be represented as an int64 cell index
_MAX_CELL = 2.0**62


class DataError(ValueError):
    """Malformed input data (non-finite values, bad CSV rows, wrong shape)."""


@dataclass(frozen=True)
class Partition1D:
    """Cells ``[anchor + k*h, anchor + (k+1)*h)`` for every integer k."""

    bin_width: float
    anchor: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.bin_width) and self.bin_width > 0):
            raise ValueError(f"bin_width must be positive and finite, got {self.bin_width!r}")
        if not math.isfinite(self.anchor):
            raise ValueError("anchor must be finite")

    def cells(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise DataError("cannot bin non-finite values")
        if x.size and np.max(np.abs(x - self.anchor)) / self.bin_width >= _MAX_CELL:
            raise DataError("value too far from the anchor for an int64 cell index")
        return kernels.bin_cells(x, self.bin_width, self.anchor)

    def left_edge(self, k):
        return self.anchor + np.asarray(k, dtype=np.float64) * self.bin_width


def cell_index(x: float, partition: Partition1D) -> int:
    """Index k of the cell of ``partition`` containing ``x``.

    >>> cell_index(0.37, Partition1D(0.25))
    1
    >>> cell_index(-0.1, Partition1D(0.25))
    -1
    """
    if not math.isfinite(x):
        raise DataError(f"cannot bin non-finite value {x!r}")
    return int(partition.cells(np.array([x]))[0])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable n x d matrix of finite observations."""

    values: np.ndarray
    columns: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True)
        if v.ndim != 2:
            raise DataError(f"dataset must be 2-D, got shape {v.shape}")
        if v.shape[0] < 1 or v.shape[1] < 2:
            raise DataError(f"need n >= 1 and d >= 2, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            bad = np.argwhere(~np.isfinite(v))[0]
            raise DataError(f"non-finite value at row {bad[0] + 1}, column {bad[1] + 1}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.columns is not None:
            cols = tuple(str(c) for c in self.columns)
            if len(cols) != v.shape[1]:
                raise DataError("number of column names does not match d")
            object.__setattr__(self, "columns", cols)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def column(self, i: int) -> np.ndarray:
        if not 0 <= i < self.d:
            raise IndexError(f"vertex {i} out of range for d={self.d}")
        return self.values[:, i]


def _sparse_1d(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, counts = np.unique(cells, return_counts=True)
    return uniq.astype(np.int64), counts.astype(np.int64)


def _sparse_2d(ci: np.ndarray, cj: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ui, inv_i = np.unique(ci, return_inverse=True)
    uj, inv_j = np.unique(cj, return_inverse=True)
    keys, counts = np.unique(inv_i.astype(np.int64) * len(uj) + inv_j, return_counts=True)
    cells = np.column_stack([ui[keys // len(uj)], uj[keys % len(uj)]]).astype(np.int64)
    return cells, counts.astype(np.int64)


def _frozen(a, dtype=np.int64):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarginalHistogram:
    partition: Partition1D
    cells: np.ndarray
    counts: np.ndarray
    n: int

    def __post_init__(self):
        object.__setattr__(self, "cells", _frozen(self.cells).reshape(-1))
        object.__setattr__(self, "counts", _frozen(self.counts).reshape(-1))
        if self.cells.shape != self.counts.shape:
            raise ValueError("cells and counts differ in length")
        if np.any(self.counts <= 0):
            raise ValueError("stored counts must be positive")
        if self.cells.size > 1 and np.any(np.diff(self.cells) <= 0):
            raise ValueError("cells must be strictly increasing")

    @classmethod
    def from_values(cls, x, partition: Partition1D) -> "MarginalHistogram":
        x = np.asarray(x, dtype=np.float64)
        cells, counts = _sparse_1d(partition.cells(x))
        return cls(partition, cells, counts, int(x.size))

    def lookup(self, q) -> np.ndarray:
        """Counts of the cells ``q`` (zero where unoccupied)."""
        q = np.asarray(q, dtype=np.int64)
        return kernels.lookup_sorted(self.cells, self.counts, q.reshape(-1)).reshape(q.shape)

    def count(self, k: int) -> int:
        return int(self.lookup(np.array([k]))[0])

    def as_dict(self) -> dict[int, int]:
        return dict(zip(self.cells.tolist(), self.counts.tolist()))

    def __eq__(self, other):
        if not isinstance(other, MarginalHistogram):
            return NotImplemented
        return (self.partition == other.partition and self.n == other.n
                and np.array_equal(self.cells, other.cells) and np.array_equal(self.counts, other.counts))


@dataclass(frozen=True, eq=False)
class PairHistogram:
    """Counts over product cells ``A x B`` sharing one partition on both axes.

    ``cells`` is a (k, 2) array sorted lexicographically; row ``r`` holds the
    (first-axis, second-axis) cell indices with count ``counts[r]``.
    """

    partition: Partition1D
    cells: np.ndarray
    counts: np.ndarray
    n: int
    _ranks: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        cells = _frozen(self.cells).reshape(-1, 2)
        counts = _frozen(self.counts).reshape(-1)
        if cells.shape[0] != counts.shape[0]:
            raise ValueError("cells and counts differ in length")
        if np.any(counts <= 0):
            raise ValueError("stored counts must be positive")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "counts", counts)
        ui = np.unique(cells[:, 0])
        uj = np.unique(cells[:, 1])
        keys = np.searchsorted(ui, cells[:, 0]) * len(uj) + np.searchsorted(uj, cells[:, 1])
        if keys.size > 1 and np.any(np.diff(keys) <= 0):
            raise ValueError("cells must be unique and lexicographically sorted")
        object.__setattr__(self, "_ranks", (ui, uj, keys.astype(np.int64)))

    @classmethod
    def from_values(cls, x, y, partition: Partition1D) -> "PairHistogram":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if x.shape != y.shape:
            raise ValueError("x and y differ in length")
        cells, counts = _sparse_2d(partition.cells(x), partition.cells(y))
        return cls(partition, cells, counts, int(x.size))

    def _keys(self, qi, qj):
        ui, uj, _ = self._ranks
        qi = np.asarray(qi, dtype=np.int64).reshape(-1)
        qj = np.asarray(qj, dtype=np.int64).reshape(-1)
        if ui.size == 0:
            return np.full(qi.shape, -1, dtype=np.int64)
        ri = np.searchsorted(ui, qi)
        rj = np.searchsorted(uj, qj)
        ri_c = np.minimum(ri, ui.size - 1)
        rj_c = np.minimum(rj, uj.size - 1)
        ok = (ui[ri_c] == qi) & (uj[rj_c] == qj)
        return np.where(ok, ri_c * len(uj) + rj_c, -1)

    def lookup(self, qi, qj) -> np.ndarray:
        """Counts of the product cells ``(qi[k], qj[k])``, zero where unoccupied."""
        shape = np.shape(qi)
        return kernels.lookup_sorted(self._ranks[2], self.counts, self._keys(qi, qj)).reshape(shape)

    def marginal(self, axis: int) -> MarginalHistogram:
        """Sum out the other axis (``axis`` is the one kept: 0 or 1)."""
        if axis not in (0, 1):
            raise ValueError("axis must be 0 or 1")
        cells, inv = np.unique(self.cells[:, axis], return_inverse=True)
        counts = np.zeros(cells.size, dtype=np.int64)
        np.add.at(counts, inv.reshape(-1), self.counts)
        return MarginalHistogram(self.partition, cells, counts, self.n)

    def transpose(self) -> "PairHistogram":
        order = np.lexsort((self.cells[:, 0], self.cells[:, 1]))
        return PairHistogram(self.partition, self.cells[order][:, ::-1], self.counts[order], self.n)

    def log_density(self, x, y) -> np.ndarray:
        """Log of the plain bivariate histogram ``count / (n h^2)``."""
        c = self.lookup(self.partition.cells(x), self.partition.cells(y)).astype(np.float64)
        with np.errstate(divide="ignore"):
            return np.log(c) - math.log(self.n) - 2 * math.log(self.partition.bin_width)

    def as_dict(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): int(c) for (a, b), c in zip(self.cells.tolist(), self.counts.tolist())}

    def __eq__(self, other):
        if not isinstance(other, PairHistogram):
            return NotImplemented
        return (self.partition == other.partition and self.n == other.n
                and np.array_equal(self.cells, other.cells) and np.array_equal(self.counts, other.counts))


def _check_vertex(data: Dataset, i: int):
    if not (isinstance(i, (int, np.integer)) and 0 <= i < data.d):
        raise IndexError(f"vertex {i!r} out of range for d={data.d}")


def build_marginal_histogram(data: Dataset, i: int, partition: Partition1D) -> MarginalHistogram:
    _check_vertex(data, i)
    return MarginalHistogram.from_values(data.values[:, i], partition)


def build_pair_histogram(data: Dataset, i: int, j: int, partition: Partition1D) -> PairHistogram:
    """Histogram of the column pair (i, j); axis 0 is column i."""
    _check_vertex(data, i)
    _check_vertex(data, j)
    if i == j:
        raise ValueError("a pair histogram needs two distinct vertices")
    return PairHistogram.from_values(data.values[:, i], data.values[:, j], partition)


def read_csv(path: str | Path, has_header: bool = False) -> Dataset:
    """Load a numeric CSV, one observation per row.

    Raises :class:`DataError` naming the offending (1-based) file row.
    """
    columns = None
    if has_header:
        with open(path, newline="") as fh:
            first = next(csv.reader(fh), None)
        if first is not None:
            columns = tuple(c.strip() for c in first)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            values = np.loadtxt(path, delimiter=",", skiprows=int(has_header), ndmin=2, dtype=np.float64)
        if values.size and np.all(np.isfinite(values)):
            return Dataset(values, columns)
    except ValueError:
        pass
    # slow path: locate the first bad row for the error message
    return Dataset(_parse_rows(path, has_header), columns)


def _parse_rows(path, has_header: bool) -> np.ndarray:
    rows: list[list[float]] = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if has_header and lineno == 1:
                width = len(row)
                continue
            if not row:
                continue
            if width is None:
                width = len(row)
            if len(row) != width:
                raise DataError(f"row {lineno}: expected {width} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataError(f"row {lineno}: non-numeric or missing entry") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"row {lineno}: non-finite entry")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def format_float(x: float) -> str:
    return repr(float(x))


def write_csv(path: str | Path, values: np.ndarray, columns: Sequence[str]) -> None:
    """Write rows with round-trip float formatting; an empty matrix gives a header-only file."""
    values = np.asarray(values, dtype=np.float64).reshape(-1, len(columns))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in values.tolist():
            fh.write(",".join(repr(v) for v in row) + "\n")


def default_columns(d: int) -> tuple[str, ...]:
    return tuple(f"x{k + 1}" for k in range(d))
