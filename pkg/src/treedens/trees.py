"""Spanning trees over the coordinate indices: Kruskal selection and brute-force oracles.

Vertices are 0-based in the Python API; text formats are 1-based.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Iterator

import numpy as np

if TYPE_CHECKING:
    from .mi import MIMatrix

MAX_ENUM_D = 7
SET_TOLERANCE = 1e-9


class UnionFind:
    """Disjoint sets with path compression and union by rank."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def is_connected(d: int, edges: Iterable[tuple[int, int]]) -> bool:
    uf = UnionFind(d)
    components = d
    for i, j in edges:
        if uf.union(i, j):
            components -= 1
    return components == 1


@dataclass(frozen=True)
class SpanningTree:
    """Canonical spanning tree: ``(i, j)`` with ``i < j``, edges sorted."""

    d: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        edges = tuple(sorted((min(int(i), int(j)), max(int(i), int(j))) for i, j in self.edges))
        object.__setattr__(self, "edges", edges)
        if len(edges) != self.d - 1:
            raise ValueError(f"a spanning tree on {self.d} vertices has {self.d - 1} edges, got {len(edges)}")
        for i, j in edges:
            if i == j or not (0 <= i < self.d and 0 <= j < self.d):
                raise ValueError(f"invalid edge ({i}, {j}) for d={self.d}")
        if len(set(edges)) != len(edges) or not is_connected(self.d, edges):
            raise ValueError("edges do not form a spanning tree")

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.d)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        for a in adj:
            a.sort()
        return adj

    def degrees(self) -> list[int]:
        return [len(a) for a in self.neighbors()]

    def weight(self, mi: "MIMatrix") -> float:
        return math.fsum(mi.values[i, j] for i, j in self.edges)

    def to_text(self) -> str:
        return "".join(f"{i + 1} {j + 1}\n" for i, j in self.edges)

    @classmethod
    def from_text(cls, text: str, d: int | None = None) -> "SpanningTree":
        edges = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                a, b = line.split()
                edges.append((int(a) - 1, int(b) - 1))
        if d is None:
            d = len(edges) + 1
        return cls(d, tuple(edges))

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


def chain_tree(d: int) -> SpanningTree:
    return SpanningTree(d, tuple((k, k + 1) for k in range(d - 1)))


def star_tree(d: int, center: int = 0) -> SpanningTree:
    return SpanningTree(d, tuple((center, k) for k in range(d) if k != center))


def max_spanning_tree(mi: "MIMatrix") -> SpanningTree:
    """Kruskal on the stored weights, heaviest first.

    Ties are broken by (smaller endpoint, larger endpoint) ascending; weights
    are compared exactly, so only the ordering of the weights matters.
    """
    d = mi.d
    order = sorted(mi.items(), key=lambda e: (-e[2], e[0], e[1]))
    uf = UnionFind(d)
    chosen = []
    for i, j, _ in order:
        if uf.union(i, j):
            chosen.append((i, j))
            if len(chosen) == d - 1:
                break
    if len(chosen) != d - 1:
        raise ValueError("weight graph is disconnected; no spanning tree exists")
    return SpanningTree(d, tuple(chosen))


def prufer_decode(seq: Iterable[int], d: int) -> SpanningTree:
    seq = list(seq)
    if len(seq) != d - 2:
        raise ValueError("Prüfer sequence must have length d - 2")
    degree = [1] * d
    for v in seq:
        degree[v] += 1
    leaves = [v for v in range(d) if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for v in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, v))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, v)
    edges.append((heapq.heappop(leaves), heapq.heappop(leaves)))
    return SpanningTree(d, tuple(edges))


def enumerate_spanning_trees(d: int) -> Iterator[SpanningTree]:
    """All ``d**(d-2)`` labeled trees on ``d`` vertices, one per Prüfer sequence."""
    if not 2 <= d <= MAX_ENUM_D:
        raise ValueError(f"enumeration supports 2 <= d <= {MAX_ENUM_D}, got {d}")
    for seq in itertools.product(range(d), repeat=d - 2):
        yield prufer_decode(seq, d)


def optimal_tree_set(mi: "MIMatrix", tol: float = SET_TOLERANCE) -> set[SpanningTree]:
    """Every spanning tree (over stored edges) whose total weight is within ``tol`` of the best."""
    if not 2 <= mi.d <= MAX_ENUM_D:
        raise ValueError(f"brute force supports 2 <= d <= {MAX_ENUM_D}, got {mi.d}")
    scored = []
    for t in enumerate_spanning_trees(mi.d):
        w = t.weight(mi)
        if not math.isnan(w):
            scored.append((w, t))
    if not scored:
        raise ValueError("no spanning tree uses only stored edges")
    best = max(w for w, _ in scored)
    return {t for w, t in scored if w >= best - tol}


def is_optimal(tree: SpanningTree, mi: "MIMatrix", tol: float = SET_TOLERANCE) -> bool:
    """Membership in the optimal set without enumeration (any d)."""
    return tree.weight(mi) >= max_spanning_tree(mi).weight(mi) - tol


@dataclass(frozen=True)
class MIGapReport:
    delta: float | None
    tied_pairs: int


def mi_gap(mi: "MIMatrix") -> MIGapReport:
    """Smallest positive gap between distinct stored weights, plus exact-tie count."""
    w = np.sort(mi.weights())
    if w.size < 2:
        raise ValueError("need at least two weights")
    _, counts = np.unique(w, return_counts=True)
    tied = int(np.sum(counts * (counts - 1) // 2))
    gaps = np.diff(np.unique(w))
    delta = float(gaps.min()) if gaps.size else None
    return MIGapReport(delta, tied)
