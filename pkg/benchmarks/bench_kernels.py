#!/usr/bin/env python3
"""Time the hot kernels under the numba and pure-numpy backends.

Both backends are imported directly, so no environment flag is needed.  Each
kernel is run once untimed (JIT compile), then ``--repeat`` times; the best
wall-clock time is reported along with the max absolute difference between
backends.

Usage:
    python benchmarks/bench_kernels.py [--n 100000] [--d 10] [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from treedens.kernels import numba_impl, numpy_impl
from treedens.mi import _compressed_columns
from treedens.histograms import Dataset, Partition1D


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if numba_impl is None:
        raise SystemExit("numba backend is disabled (TREEDENS_DISABLE_NUMBA); nothing to compare")

    rng = np.random.default_rng(args.seed)
    x = rng.random((args.n, args.d))
    h = args.n ** -0.25
    ids, sizes, marg, offsets = _compressed_columns(Dataset(x), Partition1D(h))
    pairs = np.array([(i, j) for i in range(args.d) for j in range(i + 1, args.d)], dtype=np.int64)
    keys = np.unique(rng.integers(0, 10 * args.n, args.n))
    vals = rng.integers(1, 100, keys.size)
    queries = rng.integers(0, 10 * args.n, args.n)

    cases = {
        "bin_cells": lambda mod: mod.bin_cells(x, h, 0.0),
        f"pair_mi_batch ({len(pairs)} pairs)": lambda mod: mod.pair_mi_batch(ids, sizes, marg, offsets, pairs,
                                                                             args.n),
        "lookup_sorted": lambda mod: mod.lookup_sorted(keys, vals, queries),
    }
    print(f"n={args.n} d={args.d} repeat={args.repeat}")
    print(f"{'kernel':32s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, run in cases.items():
        t_np, out_np = best_of(lambda: run(numpy_impl), args.repeat)
        t_nb, out_nb = best_of(lambda: run(numba_impl), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_np, dtype=float) - np.asarray(out_nb, dtype=float))))
        print(f"{name:32s} {t_np * 1e3:11.2f} {t_nb * 1e3:11.2f} {t_np / t_nb:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
