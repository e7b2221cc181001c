"""numba-compiled twins of :mod:`treedens.kernels.numpy_impl`."""

from __future__ import annotations

import math

import numba
import numpy as np
from numba import njit, prange

from .numpy_impl import DENSE_MIN


@njit(cache=True, nogil=True)
def _bin_cells(t, h, anchor, out):
    for p in range(t.size):
        v = t[p] - anchor
        k = math.floor(v / h)
        if v < k * h:
            k -= 1.0
        elif v >= (k + 1.0) * h:
            k += 1.0
        out[p] = np.int64(k)


def bin_cells(x, h, anchor):
    t = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty(t.shape, dtype=np.int64)
    _bin_cells(t.reshape(-1), float(h), float(anchor), out.reshape(-1))
    return out


@njit(cache=True, nogil=True)
def _mi_from_counts(counts, row, col, n):
    # Neumaier-compensated sum of c*log(c*n/(a*b))
    total = 0.0
    comp = 0.0
    for p in range(counts.size):
        c = float(counts[p])
        term = c * math.log(c * n / (float(row[p]) * float(col[p])))
        t = total + term
        if abs(total) >= abs(term):
            comp += (total - t) + term
        else:
            comp += (term - t) + total
        total = t
    return (total + comp) / n


def mi_from_counts(counts, row, col, n):
    counts = np.ascontiguousarray(counts, dtype=np.int64)
    if counts.size == 0:
        return 0.0
    return float(_mi_from_counts(counts, np.ascontiguousarray(row, dtype=np.int64),
                                 np.ascontiguousarray(col, dtype=np.int64), float(n)))


@njit(cache=True, nogil=True)
def _mi_pair(ids_i, ids_j, m_i, m_j, marg_i, marg_j, n):
    size = ids_i.size
    total = 0.0
    comp = 0.0
    if m_i * m_j <= max(4 * size, DENSE_MIN):
        table = np.zeros(m_i * m_j, dtype=np.int64)
        for p in range(size):
            table[ids_i[p] * m_j + ids_j[p]] += 1
        for key in range(table.size):
            if table[key] == 0:
                continue
            c = float(table[key])
            term = c * math.log(c * n / (float(marg_i[key // m_j]) * float(marg_j[key % m_j])))
            t = total + term
            if abs(total) >= abs(term):
                comp += (total - t) + term
            else:
                comp += (term - t) + total
            total = t
        return (total + comp) / n
    keys = np.sort(ids_i * m_j + ids_j)
    start = 0
    for k in range(1, size + 1):
        if k == size or keys[k] != keys[start]:
            c = float(k - start)
            key = keys[start]
            term = c * math.log(c * n / (float(marg_i[key // m_j]) * float(marg_j[key % m_j])))
            t = total + term
            if abs(total) >= abs(term):
                comp += (total - t) + term
            else:
                comp += (term - t) + total
            total = t
            start = k
    return (total + comp) / n


@njit(cache=True, nogil=True)
def _pair_mi_serial(ids, sizes, marg_counts, marg_offsets, pairs, n):
    out = np.empty(pairs.shape[0], dtype=np.float64)
    for p in range(pairs.shape[0]):
        i = pairs[p, 0]
        j = pairs[p, 1]
        out[p] = _mi_pair(ids[i], ids[j], sizes[i], sizes[j],
                          marg_counts[marg_offsets[i]:marg_offsets[i + 1]],
                          marg_counts[marg_offsets[j]:marg_offsets[j + 1]], n)
    return out


@njit(cache=True, parallel=True)
def _pair_mi_parallel(ids, sizes, marg_counts, marg_offsets, pairs, n):
    out = np.empty(pairs.shape[0], dtype=np.float64)
    for p in prange(pairs.shape[0]):
        i = pairs[p, 0]
        j = pairs[p, 1]
        out[p] = _mi_pair(ids[i], ids[j], sizes[i], sizes[j],
                          marg_counts[marg_offsets[i]:marg_offsets[i + 1]],
                          marg_counts[marg_offsets[j]:marg_offsets[j + 1]], n)
    return out


def pair_mi_batch(ids, sizes, marg_counts, marg_offsets, pairs, n, workers=1):
    args = (np.ascontiguousarray(ids, dtype=np.int64),
            np.ascontiguousarray(sizes, dtype=np.int64),
            np.ascontiguousarray(marg_counts, dtype=np.int64),
            np.ascontiguousarray(marg_offsets, dtype=np.int64),
            np.ascontiguousarray(pairs, dtype=np.int64).reshape(-1, 2),
            float(n))
    threads = min(int(workers), numba.config.NUMBA_NUM_THREADS)
    if threads > 1 and len(args[4]) > 1:
        numba.set_num_threads(threads)
        return _pair_mi_parallel(*args)
    return _pair_mi_serial(*args)


@njit(cache=True, nogil=True)
def _lookup_sorted(keys, values, queries, out):
    nk = keys.size
    for p in range(queries.size):
        q = queries[p]
        lo = 0
        hi = nk
        while lo < hi:
            mid = (lo + hi) >> 1
            if keys[mid] < q:
                lo = mid + 1
            else:
                hi = mid
        if lo < nk and keys[lo] == q:
            out[p] = values[lo]


def lookup_sorted(keys, values, queries):
    queries = np.ascontiguousarray(queries, dtype=np.int64)
    out = np.zeros(queries.shape, dtype=values.dtype)
    _lookup_sorted(np.ascontiguousarray(keys, dtype=np.int64), np.ascontiguousarray(values),
                   queries.reshape(-1), out.reshape(-1))
    return out
