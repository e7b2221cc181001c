"""Plug-in (histogram) mutual information between coordinate pairs."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import kernels
from .histograms import Dataset, Partition1D, PairHistogram


class BinWidthWarning(UserWarning):
    """A bin width looks too small or too large for the sample size."""


def _canonical_edges(edges: Iterable[tuple[int, int]], d: int) -> tuple[tuple[int, int], ...]:
    out = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j or not (0 <= i < d and 0 <= j < d):
            raise ValueError(f"invalid edge ({i}, {j}) for d={d}")
        out.add((min(i, j), max(i, j)))
    return tuple(sorted(out))


@dataclass(frozen=True, eq=False)
class MIMatrix:
    """Symmetric matrix of pairwise weights (nats); ``nan`` marks absent entries.

    ``edges`` lists the stored unordered pairs ``(i, j)``, ``i < j``, sorted.
    """

    d: int
    values: np.ndarray
    edges: tuple[tuple[int, int], ...]

    @classmethod
    def from_weights(cls, d: int, weights: dict[tuple[int, int], float]) -> "MIMatrix":
        vals = np.full((d, d), np.nan)
        edges = _canonical_edges(weights, d)
        for (i, j), w in weights.items():
            w = float(w)
            if not math.isfinite(w):
                raise ValueError(f"weight for ({i}, {j}) is not finite")
            vals[i, j] = vals[j, i] = w
        vals.setflags(write=False)
        return cls(d, vals, edges)

    @classmethod
    def from_dense(cls, w: np.ndarray, mask=None) -> "MIMatrix":
        w = np.asarray(w, dtype=np.float64)
        d = w.shape[0]
        pairs = combinations(range(d), 2) if mask is None else _canonical_edges(mask, d)
        return cls.from_weights(d, {(i, j): w[i, j] for i, j in pairs})

    @property
    def is_full(self) -> bool:
        return len(self.edges) == self.d * (self.d - 1) // 2

    def weight(self, i: int, j: int) -> float:
        return float(self.values[i, j])

    def items(self) -> Iterator[tuple[int, int, float]]:
        for i, j in self.edges:
            yield i, j, float(self.values[i, j])

    def weights(self) -> np.ndarray:
        return np.array([w for _, _, w in self.items()])

    def to_csv(self, path: str | Path) -> None:
        """``i,j,mi`` rows (1-based vertices, 17 significant digits)."""
        with open(path, "w", newline="") as fh:
            fh.write("i,j,mi\n")
            for i, j, w in self.items():
                fh.write(f"{i + 1},{j + 1},{w:.17g}\n")

    @classmethod
    def read_csv(cls, path: str | Path, d: int) -> "MIMatrix":
        weights = {}
        with open(path) as fh:
            next(fh)
            for line in fh:
                i, j, w = line.strip().split(",")
                weights[(int(i) - 1, int(j) - 1)] = float(w)
        return cls.from_weights(d, weights)


def plugin_mi(pair: PairHistogram) -> float:
    """Plug-in MI of a pair histogram, summed over occupied cells only.

    Marginal counts are taken from the histogram itself, so every occupied
    cell has positive marginals and no ``log 0`` is ever evaluated.
    """
    if pair.n < 1 or pair.counts.size == 0:
        raise ValueError("empty histogram")
    cells = pair.cells
    ui, inv_i = np.unique(cells[:, 0], return_inverse=True)
    uj, inv_j = np.unique(cells[:, 1], return_inverse=True)
    row = np.zeros(ui.size, dtype=np.int64)
    col = np.zeros(uj.size, dtype=np.int64)
    np.add.at(row, inv_i, pair.counts)
    np.add.at(col, inv_j, pair.counts)
    val = kernels.mi_from_counts(pair.counts, row[inv_i], col[inv_j], pair.n)
    return max(0.0, val)


def _compressed_columns(data: Dataset, partition: Partition1D):
    ids = np.empty((data.d, data.n), dtype=np.int64)
    sizes = np.empty(data.d, dtype=np.int64)
    margs = []
    for k in range(data.d):
        _, inv, cnt = np.unique(partition.cells(data.values[:, k]), return_inverse=True, return_counts=True)
        ids[k] = inv.reshape(-1)
        sizes[k] = cnt.size
        margs.append(cnt.astype(np.int64))
    offsets = np.concatenate([[0], np.cumsum([m.size for m in margs])]).astype(np.int64)
    return ids, sizes, np.concatenate(margs), offsets


def mi_matrix(data: Dataset, partition: Partition1D, mask=None, workers: int = 1) -> MIMatrix:
    """Plug-in MI for every pair in ``mask`` (all pairs by default).

    Each pair is computed independently, so masked entries equal the
    corresponding entries of a full run and the result does not depend
    on ``workers``.
    """
    from .trees import is_connected

    d = data.d
    if mask is None:
        edges = tuple(combinations(range(d), 2))
    else:
        edges = _canonical_edges(mask, d)
        if not is_connected(d, edges):
            raise ValueError("candidate edge set does not connect all vertices")
    ids, sizes, marg_counts, offsets = _compressed_columns(data, partition)
    pairs = np.array(edges, dtype=np.int64).reshape(-1, 2)
    vals = kernels.pair_mi_batch(ids, sizes, marg_counts, offsets, pairs, data.n, workers=workers)
    return MIMatrix.from_weights(d, {e: max(0.0, float(v)) for e, v in zip(edges, vals)})


def check_bin_widths(n: int, h: float, h_prime: float) -> list[str]:
    """Finite-n heuristics for the consistency conditions; warns and returns the messages."""
    msgs = []
    if n * h_prime**2 < 10:
        msgs.append(f"n*h'^2 = {n * h_prime**2:.3g} < 10: MI histogram cells are thinly populated")
    if n <= 1:
        msgs.append("n <= 1: density histogram is degenerate")
    elif n * h**2 / math.log(n) < 10:
        msgs.append(f"n*h^2/log(n) = {n * h**2 / math.log(n):.3g} < 10: density cells are thinly populated")
    for m in msgs:
        warnings.warn(m, BinWidthWarning, stacklevel=3)
    return msgs


def default_bin_widths(n: int, c1: float = 1.0, c2: float = 1.0, warn: bool = True) -> tuple[float, float]:
    """``(h, h') = (c1 n^{-1/4}, c2 n^{-1/4})``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (c1 > 0 and c2 > 0):
        raise ValueError("bin-width constants must be positive")
    scale = float(n) ** -0.25
    h, hp = c1 * scale, c2 * scale
    if warn:
        check_bin_widths(n, h, hp)
    return h, hp


def read_mask(path: str | Path, d: int) -> tuple[tuple[int, int], ...]:
    """Candidate edges from ``i j`` lines (1-based); blank lines and ``#`` comments skipped."""
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'i j'")
        edges.append((int(parts[0]) - 1, int(parts[1]) - 1))
    return _canonical_edges(edges, d)
