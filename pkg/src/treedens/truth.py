"""Tree-structured FGM ground truths on the unit cube.

    f(x) = prod_{(i,j) in tree} (1 + a_ij (2 x_i - 1)(2 x_j - 1)),   |a_ij| < 1

has uniform marginals, and every bivariate marginal is again FGM: for a pair
joined by a tree path of length L its coupling is the product of the path
couplings times 3**-(L-1).  The density is bounded, Lipschitz on the cube,
and the tree is Markov for it, so everything here is exactly checkable.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate

from .density import SAMPLE_CHUNK, root_and_order
from .mi import MIMatrix
from .trees import MAX_ENUM_D, SpanningTree, chain_tree, optimal_tree_set, star_tree

MAX_MI_D = 8
QUAD_TOL = 1e-12


@lru_cache(maxsize=None)
def fgm_mutual_information(rho: float) -> float:
    """MI (nats) of the FGM copula ``1 + rho (2x-1)(2y-1)`` by adaptive 2-D quadrature."""
    rho = abs(float(rho))
    if not rho < 1:
        raise ValueError("FGM coupling must satisfy |a| < 1")
    if rho == 0.0:
        return 0.0

    def integrand(y, x):
        c = 1.0 + rho * (2 * x - 1) * (2 * y - 1)
        return c * math.log(c)

    val, _ = integrate.dblquad(integrand, 0.0, 1.0, 0.0, 1.0, epsabs=QUAD_TOL, epsrel=QUAD_TOL)
    return max(0.0, val)


def _gl_nodes(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


@dataclass(frozen=True)
class FGMTreeTruth:
    """``couplings[k]`` belongs to ``tree.edges[k]``."""

    tree: SpanningTree
    couplings: tuple[float, ...]
    seed: int = 0

    def __post_init__(self):
        a = tuple(float(c) for c in self.couplings)
        if len(a) != len(self.tree.edges):
            raise ValueError("need one coupling per tree edge")
        if not all(abs(c) < 1 for c in a):
            raise ValueError("FGM couplings must satisfy |a| < 1")
        object.__setattr__(self, "couplings", a)

    @property
    def d(self) -> int:
        return self.tree.d

    @property
    def edge_coupling(self) -> dict[tuple[int, int], float]:
        return dict(zip(self.tree.edges, self.couplings))

    def support_box(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(self.d), np.ones(self.d)

    def breakpoints(self, axis: int) -> np.ndarray:
        return np.array([0.0, 1.0])

    def logpdf(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        inside = np.all((x >= 0) & (x <= 1), axis=1)
        u = 2 * x - 1
        out = np.zeros(x.shape[0])
        with np.errstate(invalid="ignore", divide="ignore"):
            for (i, j), a in self.edge_coupling.items():
                out += np.log1p(a * u[:, i] * u[:, j])
        out[~inside] = -np.inf
        return out

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    def pair_coupling(self, i: int, j: int) -> float:
        """Coupling of the (i, j) bivariate marginal, which is FGM."""
        if i == j:
            raise ValueError("need two distinct vertices")
        adj = self.tree.neighbors()
        coup = self.edge_coupling
        prev = {i: None}
        stack = [i]
        while stack:
            v = stack.pop()
            for w in adj[v]:
                if w not in prev:
                    prev[w] = v
                    stack.append(w)
        rho, length, v = 1.0, 0, j
        while prev[v] is not None:
            u = prev[v]
            rho *= coup[(min(u, v), max(u, v))]
            length += 1
            v = u
        return rho / 3.0 ** (length - 1)

    def bivariate_pdf(self, i: int, j: int, x, y):
        rho = self.pair_coupling(i, j)
        return 1.0 + rho * (2 * np.asarray(x) - 1) * (2 * np.asarray(y) - 1)

    def cell_masses(self, i: int, j: int, edges_x, edges_y, order: int = 4) -> np.ndarray:
        """Probability of each rectangle of the (i, j) marginal, Gauss-Legendre per cell."""
        ex = np.asarray(edges_x, dtype=np.float64)
        ey = np.asarray(edges_y, dtype=np.float64)
        t, w = _gl_nodes(order)
        x0, dx = ex[:-1, None], np.diff(ex)[:, None]
        y0, dy = ey[:-1, None], np.diff(ey)[:, None]
        xs = x0 + dx * t  # (cx, q)
        ys = y0 + dy * t
        f = self.bivariate_pdf(i, j, xs[:, None, :, None], ys[None, :, None, :])
        return np.einsum("abpq,p,q->ab", f, w, w) * dx * dy.T

    @property
    def lipschitz_constant(self) -> float:
        """Largest Lipschitz constant of the bivariate marginals on the unit square."""
        best = 0.0
        for i in range(self.d):
            for j in range(i + 1, self.d):
                best = max(best, 2 * math.sqrt(2) * abs(self.pair_coupling(i, j)))
        return best

    def _ancestral(self, m: int, rng: np.random.Generator) -> np.ndarray:
        ro = root_and_order(self.tree, 0)
        coup = self.edge_coupling
        x = np.empty((m, self.d))
        # draw in rooted order: the root is renumbered last
        root = ro.order[-1]
        x[:, root] = rng.random(m)
        for k in range(self.d - 2, -1, -1):
            v, p = ro.order[k], ro.order[ro.parent[k]]
            b = coup[(min(v, p), max(v, p))] * (2 * x[:, p] - 1)
            w = rng.random(m)
            # root of b u^2 + (1 - b) u - w = 0 in [0, 1], stable for b -> 0
            x[:, v] = 2 * w / ((1 - b) + np.sqrt((1 - b) ** 2 + 4 * b * w))
        return x

    def sample(self, m: int, rng: int | np.random.Generator | None = None, workers: int = 1) -> np.ndarray:
        if m < 0:
            raise ValueError("m must be >= 0")
        if m == 0:
            return np.empty((0, self.d))
        if isinstance(rng, np.random.Generator):
            return self._ancestral(m, rng)
        seed = self.seed if rng is None else int(rng)
        sizes = [min(SAMPLE_CHUNK, m - s) for s in range(0, m, SAMPLE_CHUNK)]

        def run(c):
            return self._ancestral(sizes[c], np.random.default_rng(np.random.SeedSequence([seed, c])))

        if workers > 1 and len(sizes) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                return np.concatenate(list(pool.map(run, range(len(sizes)))))
        return np.concatenate([run(c) for c in range(len(sizes))])

    def to_dict(self) -> dict:
        return {
            "family": "fgm",
            "d": self.d,
            "tree": [[i + 1, j + 1] for i, j in self.tree.edges],
            "couplings": list(self.couplings),
            "seed": self.seed,
        }


def fgm_tree_truth(tree: SpanningTree, couplings: float | Sequence[float], seed: int = 0) -> FGMTreeTruth:
    if isinstance(couplings, (int, float)):
        couplings = [float(couplings)] * len(tree.edges)
    return FGMTreeTruth(tree, tuple(couplings), seed)


def independence_truth(d: int, seed: int = 0) -> FGMTreeTruth:
    return FGMTreeTruth(chain_tree(d), (0.0,) * (d - 1), seed)


def truth_from_dict(doc: dict) -> FGMTreeTruth:
    """Build a truth from ``{"family": "fgm" | "independence", ...}``.

    ``tree`` may be an edge list (1-based), ``"chain"`` or ``"star"``;
    ``couplings`` a list aligned with the sorted edges or a single number.
    """
    family = doc.get("family", "fgm")
    d = int(doc["d"])
    seed = int(doc.get("seed", 0))
    if family == "independence":
        return independence_truth(d, seed)
    if family != "fgm":
        raise ValueError(f"unsupported ground-truth family {family!r}")
    spec = doc.get("tree", "chain")
    if spec == "chain":
        tree = chain_tree(d)
    elif spec == "star":
        tree = star_tree(d, int(doc.get("center", 1)) - 1)
    else:
        raw = [(int(i) - 1, int(j) - 1) for i, j in spec]
        tree = SpanningTree(d, tuple(raw))
        c = doc.get("couplings", 0.0)
        if not isinstance(c, (int, float)):
            # couplings follow the listed edge order; realign to canonical order
            by_edge = {(min(i, j), max(i, j)): float(a) for (i, j), a in zip(raw, c)}
            return FGMTreeTruth(tree, tuple(by_edge[e] for e in tree.edges), seed)
    return fgm_tree_truth(tree, doc.get("couplings", 0.0), seed)


def true_mi_matrix(gt: FGMTreeTruth) -> MIMatrix:
    if not isinstance(gt, FGMTreeTruth):
        raise TypeError("true MI is only available for FGM tree truths")
    if gt.d > MAX_MI_D:
        raise ValueError(f"true MI supports d <= {MAX_MI_D}")
    w = {}
    for i in range(gt.d):
        for j in range(i + 1, gt.d):
            w[(i, j)] = fgm_mutual_information(gt.pair_coupling(i, j))
    return MIMatrix.from_weights(gt.d, w)


def true_optimal_trees(gt: FGMTreeTruth) -> set[SpanningTree]:
    if gt.d > MAX_ENUM_D:
        raise ValueError(f"brute force supports d <= {MAX_ENUM_D}")
    return optimal_tree_set(true_mi_matrix(gt))
