#!/usr/bin/env python3
"""Benchmark the numba kernels against their numpy/scipy fallbacks.

Usage:
    python3 benchmarks/bench_kernels.py [--reps N]

The numba path is also what you get from the library by default; setting
PETCT_TTA_DISABLE_NUMBA=1 switches the library to the fallbacks measured here.
"""

import argparse
import time

import numpy as np

from petct_tta import kernels

try:
    from petct_tta import _numba_kernels as nb
except ImportError:
    nb = None


def timeit(fn, reps):
    fn()  # warmup (and JIT compile for the numba variants)
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_zoom(reps):
    rng = np.random.default_rng(0)
    vol = rng.random((128, 128, 128), dtype=np.float32)
    rows = [("zoom 128^3 x1.1 (numpy)", timeit(lambda: kernels.zoom_resample_numpy(vol, 1.1), reps))]
    if nb is not None:
        rows.append(("zoom 128^3 x1.1 (numba)", timeit(lambda: nb.zoom_resample(vol, 1.1), reps)))
    return rows


def lesion_mask(dims=(128, 128, 128), blobs=40, seed=1):
    rng = np.random.default_rng(seed)
    grid = np.indices(dims, dtype=np.float32)
    mask = np.zeros(dims, dtype=bool)
    for _ in range(blobs):
        center = rng.uniform(10, np.array(dims) - 10)
        radius = rng.uniform(2, 6)
        d2 = sum((g - c) ** 2 for g, c in zip(grid, center))
        mask |= d2 <= radius * radius
    return mask


def bench_labels(reps):
    mask = lesion_mask()
    rows = [("label 128^3 conn26 (scipy)",
             timeit(lambda: kernels.label_components_numpy(mask, 26), reps))]
    if nb is not None:
        mask_u8 = np.ascontiguousarray(mask).view(np.uint8)
        offsets = kernels.neighbor_offsets(26)
        rows.append(("label 128^3 conn26 (numba)",
                     timeit(lambda: nb.label_components(mask_u8, offsets), reps)))
    return rows


def bench_fused_counts(reps):
    rng = np.random.default_rng(2)
    n, m, n_cand = 64 ** 3, 11, 200
    stack = rng.random((n, m), dtype=np.float32)
    gt = (rng.random(n) < 0.05).astype(np.uint8)
    cand = rng.dirichlet(np.ones(m), size=n_cand)
    rows = [(f"fused counts {n_cand} candidates (numpy)",
             timeit(lambda: kernels.batch_fused_counts_numpy(stack, cand, 0.5, gt), reps))]
    if nb is not None:
        import numba
        cand_t = np.ascontiguousarray(cand.T)
        nthreads = numba.get_num_threads()
        inter = np.empty(n_cand, np.int64)
        psum = np.empty(n_cand, np.int64)
        rows.append((f"fused counts {n_cand} candidates (numba)",
                     timeit(lambda: nb.batch_fused_counts(stack, cand_t, 0.5, gt,
                                                          nthreads, inter, psum),
                            reps)))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=3)
    args = parser.parse_args()

    print(f"active library backend: {kernels.backend()}")
    if nb is None:
        print("numba unavailable or disabled; measuring the fallbacks only\n")

    all_rows = []
    for bench in (bench_zoom, bench_labels, bench_fused_counts):
        rows = bench(args.reps)
        all_rows.extend(rows)
        if len(rows) == 2:
            speedup = rows[0][1] / rows[1][1]
            all_rows.append((f"  -> numba speedup", speedup))
        print(".", end="", flush=True)
    print("\n")

    width = max(len(name) for name, _ in all_rows) + 2
    for name, value in all_rows:
        if name.strip().startswith("->"):
            print(f"{name:<{width}} {value:6.1f}x")
        else:
            print(f"{name:<{width}} {value * 1e3:9.2f} ms")


if __name__ == "__main__":
    main()
