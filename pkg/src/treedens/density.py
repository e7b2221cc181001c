"""Ratio-of-histograms tree density: rooting, fitting, evaluation, sampling, persistence.

A fitted model keeps, in renumbered coordinates, the root marginal histogram
and one pair histogram per non-root vertex ``k`` (axis 0 = ``k``, axis 1 =
its parent).  The density on a cell product is

    prod_k  c_k(A_k, B_k) / (h * m_{parent(k)}(B_k))  *  m_root(A_root) / (n h)

with ``m_p`` the marginal counts of vertex ``p`` and an empty cell giving 0.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .histograms import Dataset, MarginalHistogram, PairHistogram, Partition1D
from .trees import SpanningTree

FORMAT = "treedens-model/1"
SAMPLE_CHUNK = 1 << 16


@dataclass(frozen=True)
class RootedOrder:
    """Renumbering of a rooted tree.

    ``order[k]`` is the original label of renumbered vertex ``k``; the root is
    renumbered ``d - 1``.  ``parent[k] > k`` is the renumbered parent of ``k``.
    """

    order: tuple[int, ...]
    parent: tuple[int, ...]

    def __post_init__(self):
        d = len(self.order)
        if sorted(self.order) != list(range(d)):
            raise ValueError("order must be a permutation of 0..d-1")
        if len(self.parent) != d - 1:
            raise ValueError("parent map must have d - 1 entries")
        for k, p in enumerate(self.parent):
            if not k < p < d:
                raise ValueError(f"parent of {k} must exceed it, got {p}")

    @property
    def d(self) -> int:
        return len(self.order)

    @property
    def root_original(self) -> int:
        return self.order[-1]

    @property
    def permutation(self) -> tuple[int, ...]:
        """Renumbered label of each original vertex."""
        perm = [0] * self.d
        for k, v in enumerate(self.order):
            perm[v] = k
        return tuple(perm)

    def tree(self) -> SpanningTree:
        return SpanningTree(self.d, tuple((self.order[k], self.order[p]) for k, p in enumerate(self.parent)))


def default_root(tree: SpanningTree) -> int:
    """Vertex of maximum degree, smallest label on ties."""
    deg = tree.degrees()
    return max(range(tree.d), key=lambda v: (deg[v], -v))


def root_and_order(tree: SpanningTree, root: int | None = None) -> RootedOrder:
    """Renumber so that vertices come in nonincreasing depth from ``root``.

    Equal depths are ordered by ascending original label; hence every vertex
    is a leaf of the subtree spanned by itself and the later vertices.
    """
    if root is None:
        root = default_root(tree)
    if not 0 <= root < tree.d:
        raise ValueError(f"root {root} out of range for d={tree.d}")
    adj = tree.neighbors()
    depth = [-1] * tree.d
    up = [-1] * tree.d
    depth[root] = 0
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if depth[w] < 0:
                depth[w] = depth[v] + 1
                up[w] = v
                queue.append(w)
    order = sorted(range(tree.d), key=lambda v: (-depth[v], v))
    renum = {v: k for k, v in enumerate(order)}
    parent = tuple(renum[up[v]] for v in order[:-1])
    return RootedOrder(tuple(order), parent)


@dataclass(frozen=True, eq=False)
class TreeDensityModel:
    order: RootedOrder
    partition: Partition1D
    root_marginal: MarginalHistogram
    edges: tuple[PairHistogram, ...]
    n: int

    def __post_init__(self):
        if len(self.edges) != self.order.d - 1:
            raise ValueError("need one pair histogram per non-root vertex")

    @property
    def d(self) -> int:
        return self.order.d

    @property
    def h(self) -> float:
        return self.partition.bin_width

    @property
    def tree(self) -> SpanningTree:
        return self.order.tree()

    @cached_property
    def child_marginals(self) -> tuple[MarginalHistogram, ...]:
        return tuple(e.marginal(0) for e in self.edges)

    def vertex_marginal(self, k: int) -> MarginalHistogram:
        """Marginal counts of renumbered vertex ``k`` as stored in the model."""
        return self.root_marginal if k == self.d - 1 else self.child_marginals[k]

    @cached_property
    def _cancel(self) -> int:
        # the root marginal cancels the denominator of the first root child
        return min(k for k, p in enumerate(self.order.parent) if p == self.d - 1)

    @cached_property
    def _samplers(self):
        out = []
        for e in self.edges:
            idx = np.lexsort((e.cells[:, 0], e.cells[:, 1]))
            child = e.cells[idx, 0]
            par = e.cells[idx, 1]
            cum = np.cumsum(e.counts[idx])
            gpar, gstart = np.unique(par, return_index=True)
            gend = np.append(gstart[1:], par.size) - 1
            base = cum[gstart] - e.counts[idx][gstart]
            out.append((child, gpar, base, cum[gend] - base, cum))
        return out

    def to_dict(self, provenance: dict | None = None) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "format": FORMAT,
            "d": self.d,
            "n": self.n,
            "h": self.h,
            "anchor": self.partition.anchor,
            "root_original_label": self.order.root_original + 1,
            "permutation": [p + 1 for p in self.order.permutation],
            "parent": [p + 1 for p in self.order.parent],
            "tree": [[i + 1, j + 1] for i, j in self.tree.edges],
            "root_marginal": [[int(c), int(k)] for c, k in zip(self.root_marginal.cells, self.root_marginal.counts)],
            "edges": [
                {
                    "child": k + 1,
                    "parent": self.order.parent[k] + 1,
                    "cells": [[int(a), int(b), int(c)] for (a, b), c in zip(e.cells.tolist(), e.counts.tolist())],
                }
                for k, e in enumerate(self.edges)
            ],
        }
        if provenance is not None:
            doc["provenance"] = provenance
        return doc

    @cached_property
    def digest(self) -> str:
        """sha256 of the canonical model document without provenance."""
        blob = json.dumps(self.to_dict(), separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def fit_tree_density(data: Dataset, order: RootedOrder, partition: Partition1D) -> TreeDensityModel:
    if data.d != order.d:
        raise ValueError(f"data has d={data.d} but the tree has {order.d} vertices")
    x = data.values[:, list(order.order)]
    root = MarginalHistogram.from_values(x[:, -1], partition)
    edges = tuple(PairHistogram.from_values(x[:, k], x[:, p], partition) for k, p in enumerate(order.parent))
    return TreeDensityModel(order, partition, root, edges, data.n)


def _renumbered_cells(model: TreeDensityModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.d:
        raise ValueError(f"points must have {model.d} coordinates")
    if not np.all(np.isfinite(x)):
        raise ValueError("points must be finite")
    cells = model.partition.cells(x.reshape(-1, model.d))
    return cells[:, list(model.order.order)]


def eval_log_density(model: TreeDensityModel, x) -> np.ndarray | float:
    """``log f_n(x)``; ``-inf`` wherever a numerator count is zero (including 0/0)."""
    x = np.asarray(x, dtype=np.float64)
    cells = _renumbered_cells(model, x)
    d = model.d
    par = model.order.parent
    num = np.stack([model.edges[k].lookup(cells[:, k], cells[:, p]) for k, p in enumerate(par)])
    den_idx = [k for k in range(d - 1) if k != model._cancel]
    den = np.stack([model.vertex_marginal(par[k]).lookup(cells[:, par[k]]) for k in den_idx]) if den_idx \
        else np.ones((0, cells.shape[0]), dtype=np.int64)
    empty = np.any(num == 0, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (np.sum(np.log(num.astype(np.float64)), axis=0) - np.sum(np.log(den.astype(np.float64)), axis=0)) \
            - math.log(model.n) - d * math.log(model.h)
    out[empty] = -np.inf
    return float(out[0]) if x.ndim == 1 else out


def eval_density(model: TreeDensityModel, x):
    return np.exp(eval_log_density(model, x))


@dataclass(frozen=True)
class NormalizationCheck:
    ok: bool
    max_deviation: int

    def __bool__(self):
        return self.ok


def _count_deviation(a: MarginalHistogram, b: MarginalHistogram) -> int:
    cells = np.union1d(a.cells, b.cells)
    if cells.size == 0:
        return 0
    return int(np.max(np.abs(a.lookup(cells) - b.lookup(cells))))


def verify_normalization(model: TreeDensityModel) -> NormalizationCheck:
    """Integer-level check that the fitted factors telescope to total mass one.

    Requires the root marginal and every edge to hold ``n`` samples, and the
    parent-axis sums of each edge to equal the parent's stored marginal.
    """
    dev = abs(int(model.root_marginal.counts.sum()) - model.n)
    for k, e in enumerate(model.edges):
        dev = max(dev, abs(int(e.counts.sum()) - model.n))
        dev = max(dev, _count_deviation(e.marginal(1), model.vertex_marginal(model.order.parent[k])))
    return NormalizationCheck(dev == 0, dev)


def _sample_chunk(model: TreeDensityModel, m: int, rng: np.random.Generator) -> np.ndarray:
    d = model.d
    h = model.h
    cells = np.empty((m, d), dtype=np.int64)
    root = model.root_marginal
    r = rng.integers(0, model.n, size=m)
    cells[:, d - 1] = root.cells[np.searchsorted(np.cumsum(root.counts), r, side="right")]
    for k in range(d - 2, -1, -1):
        child, gpar, base, total, cum = model._samplers[k]
        pc = cells[:, model.order.parent[k]]
        g = np.searchsorted(gpar, pc)
        if np.any(g >= gpar.size) or np.any(gpar[np.minimum(g, gpar.size - 1)] != pc):
            raise ValueError("model is inconsistent: parent cell without conditional mass")
        r = rng.integers(0, total[g])
        cells[:, k] = child[np.searchsorted(cum, base[g] + r, side="right")]
    x = model.partition.left_edge(cells) + rng.random((m, d)) * h
    # rounding can push a point onto the next cell's left edge
    off = model.partition.cells(x) != cells
    x[off] = model.partition.left_edge(cells[off])
    out = np.empty_like(x)
    out[:, list(model.order.order)] = x
    return out


def sample(model: TreeDensityModel, m: int, rng: int | np.random.Generator = 0, workers: int = 1) -> np.ndarray:
    """``m`` ancestral draws in original coordinate order.

    With an integer seed, chunk ``c`` of ``SAMPLE_CHUNK`` rows uses the
    substream ``SeedSequence([seed, c])``, so output is independent of ``workers``.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    if m == 0:
        return np.empty((0, model.d))
    sizes = [min(SAMPLE_CHUNK, m - s) for s in range(0, m, SAMPLE_CHUNK)]
    if isinstance(rng, np.random.Generator):
        return np.concatenate([_sample_chunk(model, s, rng) for s in sizes])
    seed = int(rng)

    def run(c):
        return _sample_chunk(model, sizes[c], np.random.default_rng(np.random.SeedSequence([seed, c])))

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(c) for c in range(len(sizes))]
    return np.concatenate(parts)


def cell_distribution(model: TreeDensityModel, exact: bool = False):
    """All occupied cell vectors (original order) with their model probabilities.

    Enumerates the support by expanding from the root; intended for small models.
    Probabilities are :class:`fractions.Fraction` when ``exact``.
    """
    d = model.d
    par = model.order.parent
    states = [({d - 1: int(c)}, (Fraction(int(k), model.n) if exact else k / model.n))
              for c, k in zip(model.root_marginal.cells, model.root_marginal.counts)]
    for k in range(d - 2, -1, -1):
        e = model.edges[k]
        marg = model.vertex_marginal(par[k])
        rows: dict[int, list[tuple[int, int]]] = {}
        for (a, b), c in zip(e.cells.tolist(), e.counts.tolist()):
            rows.setdefault(b, []).append((a, c))
        nxt = []
        for cellmap, p in states:
            b = cellmap[par[k]]
            mb = marg.count(b)
            for a, c in rows.get(b, []):
                q = Fraction(c, mb) if exact else c / mb
                nxt.append(({**cellmap, k: a}, p * q))
        states = nxt
    cells = np.array([[cm[model.order.permutation[v]] for v in range(d)] for cm, _ in states], dtype=np.int64)
    return cells, [p for _, p in states]


_SCHEMA = {
    "type": "object",
    "required": ["d", "n", "h", "anchor", "root_original_label", "permutation", "parent", "root_marginal", "edges"],
    "properties": {
        "format": {"const": FORMAT},
        "d": {"type": "integer", "minimum": 2},
        "n": {"type": "integer", "minimum": 1},
        "h": {"type": "number", "exclusiveMinimum": 0},
        "anchor": {"type": "number"},
        "root_original_label": {"type": "integer", "minimum": 1},
        "permutation": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "parent": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "tree": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2}},
        "root_marginal": {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                                     "minItems": 2, "maxItems": 2}},
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["child", "parent", "cells"],
                "properties": {
                    "child": {"type": "integer", "minimum": 1},
                    "parent": {"type": "integer", "minimum": 1},
                    "cells": {"type": "array", "items": {"type": "array", "items": {"type": "integer"},
                                                         "minItems": 3, "maxItems": 3}},
                },
            },
        },
        "provenance": {"type": "object"},
    },
}


class ModelFormatError(ValueError):
    pass


def model_from_dict(doc: dict) -> TreeDensityModel:
    try:
        jsonschema.validate(doc, _SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ModelFormatError(f"invalid model document: {exc.message}") from None
    d = doc["d"]
    try:
        perm = [p - 1 for p in doc["permutation"]]
        if sorted(perm) != list(range(d)):
            raise ValueError("permutation is not a bijection on 1..d")
        order = [0] * d
        for v, k in enumerate(perm):
            order[k] = v
        ro = RootedOrder(tuple(order), tuple(p - 1 for p in doc["parent"]))
        if ro.root_original != doc["root_original_label"] - 1:
            raise ValueError("root_original_label disagrees with permutation")
        part = Partition1D(float(doc["h"]), float(doc["anchor"]))
        rm = np.array(doc["root_marginal"], dtype=np.int64).reshape(-1, 2)
        root = MarginalHistogram(part, rm[:, 0], rm[:, 1], doc["n"])
        if len(doc["edges"]) != d - 1:
            raise ValueError("need d - 1 edges")
        edges = []
        for k, e in enumerate(doc["edges"]):
            if e["child"] != k + 1 or e["parent"] != ro.parent[k] + 1:
                raise ValueError(f"edge {k + 1} disagrees with the parent map")
            c = np.array(e["cells"], dtype=np.int64).reshape(-1, 3)
            edges.append(PairHistogram(part, c[:, :2], c[:, 2], doc["n"]))
        model = TreeDensityModel(ro, part, root, tuple(edges), doc["n"])
        if "tree" in doc and SpanningTree(d, tuple((i - 1, j - 1) for i, j in doc["tree"])) != model.tree:
            raise ValueError("tree disagrees with the parent map")
    except (ValueError, IndexError) as exc:
        raise ModelFormatError(f"invalid model document: {exc}") from None
    return model


def dumps_model(model: TreeDensityModel, provenance: dict | None = None) -> str:
    """One top-level key per line, one edge per line; values compact."""
    doc = model.to_dict(provenance)
    lines = []
    for key, val in doc.items():
        if key == "edges":
            inner = ",\n".join("  " + json.dumps(e, separators=(",", ":")) for e in val)
            lines.append(f' "edges": [\n{inner}\n ]')
        else:
            lines.append(f" {json.dumps(key)}: {json.dumps(val, separators=(',', ':'))}")
    return "{\n" + ",\n".join(lines) + "\n}\n"


def save_model(model: TreeDensityModel, path: str | Path, provenance: dict | None = None) -> None:
    Path(path).write_text(dumps_model(model, provenance))


def load_model(path: str | Path) -> TreeDensityModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not JSON ({exc})") from None
    return model_from_dict(doc)
