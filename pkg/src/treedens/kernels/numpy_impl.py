"""Reference numpy implementations of the hot kernels.

Every function here has a numba twin in :mod:`treedens.kernels.numba_impl`
with the same signature; the two are cross-checked in the test suite.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# joint tables up to this many cells are counted densely rather than by sorting
DENSE_MIN = 1 << 16


def bin_cells(x, h, anchor):
    """Integer cell index k with ``k*h <= x - anchor < (k+1)*h``."""
    t = np.asarray(x, dtype=np.float64) - anchor
    k = np.floor(t / h)
    # floor(t/h) can be off by one against the float cell edges k*h
    k -= t < k * h
    k += t >= (k + 1.0) * h
    return k.astype(np.int64)


def mi_from_counts(counts, row, col, n):
    c = np.asarray(counts, dtype=np.float64)
    if c.size == 0:
        return 0.0
    terms = c * np.log(c * n / (np.asarray(row, np.float64) * np.asarray(col, np.float64)))
    return math.fsum(terms.tolist()) / n


def _mi_pair(ids_i, ids_j, m_i, m_j, marg_i, marg_j, n):
    keys = ids_i * m_j + ids_j
    if m_i * m_j <= max(4 * keys.size, DENSE_MIN):
        table = np.bincount(keys, minlength=m_i * m_j)
        uniq = np.flatnonzero(table)
        counts = table[uniq]
    else:
        uniq, counts = np.unique(keys, return_counts=True)
    return mi_from_counts(counts, marg_i[uniq // m_j], marg_j[uniq % m_j], n)


def pair_mi_batch(ids, sizes, marg_counts, marg_offsets, pairs, n, workers=1):
    """Plug-in MI for each row of ``pairs``.

    ``ids`` is a (d, n) array of per-column compressed cell ids (0..sizes[k]-1),
    ``marg_counts[marg_offsets[k]:marg_offsets[k+1]]`` the cell counts of column k.
    """
    def one(p):
        i, j = int(pairs[p, 0]), int(pairs[p, 1])
        mi = marg_counts[marg_offsets[i]:marg_offsets[i + 1]]
        mj = marg_counts[marg_offsets[j]:marg_offsets[j + 1]]
        return _mi_pair(ids[i], ids[j], int(sizes[i]), int(sizes[j]), mi, mj, n)

    idx = range(len(pairs))
    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(one, idx))
    else:
        vals = [one(p) for p in idx]
    return np.asarray(vals, dtype=np.float64)


def lookup_sorted(keys, values, queries):
    """values[pos of q in keys] for each query, 0 where missing."""
    keys = np.asarray(keys)
    queries = np.asarray(queries)
    out = np.zeros(queries.shape, dtype=values.dtype)
    if keys.size == 0:
        return out
    pos = np.searchsorted(keys, queries)
    pos_c = np.minimum(pos, keys.size - 1)
    hit = keys[pos_c] == queries
    out[hit] = values[pos_c[hit]]
    return out
