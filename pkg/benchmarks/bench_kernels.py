#!/usr/bin/env python3
"""Compare the compiled kernels against the numpy fallback.

Run after building the extension:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from blockcast import _kernels
from blockcast._kernels import _pykernels as pk


def timeit(fn, reps=5):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(reps):
        fn()
    return (time.perf_counter() - t0) / reps * 1e3


def main():
    if not _kernels.COMPILED:
        print("compiled extension not available; nothing to compare")
        return
    ck = _kernels.impl
    rng = np.random.default_rng(0)

    rows = []

    x = rng.standard_normal((40, 8, 256, 64))
    rows.append((
        "im2col (radar conv1)",
        timeit(lambda: ck.im2col(x, 3, 3, 4, 4, 1, 1)),
        timeit(lambda: pk.im2col(x, 3, 3, 4, 4, 1, 1)),
    ))
    cols = ck.im2col(x, 3, 3, 4, 4, 1, 1)
    rows.append((
        "col2im (radar conv1)",
        timeit(lambda: ck.col2im(cols, 40, 8, 256, 64, 3, 3, 4, 4, 1, 1)),
        timeit(lambda: pk.col2im(cols, 40, 8, 256, 64, 3, 3, 4, 4, 1, 1)),
    ))

    pts = np.concatenate([
        rng.uniform(-40, 40, (1800, 2)),
        rng.uniform(0, 3, (1800, 1)),
    ], axis=1)
    rows.append((
        "knn_mean_dists (1800 pts, k=8)",
        timeit(lambda: ck.knn_mean_dists(pts, 8)),
        timeit(lambda: pk.knn_mean_dists(pts, 8)),
    ))
    rows.append((
        "dbscan (1800 pts)",
        timeit(lambda: ck.dbscan_labels(pts, 0.75, 5)),
        timeit(lambda: pk.dbscan_labels(pts, 0.75, 5)),
    ))

    cells = rng.integers(0, 160_000, 50_000)
    z = rng.standard_normal(50_000)
    rows.append((
        "bev_scatter (50k pts)",
        timeit(lambda: ck.bev_scatter(cells, z, 160_000)),
        timeit(lambda: pk.bev_scatter(cells, z, 160_000)),
    ))

    print(f"{'kernel':36s} {'compiled':>10s} {'fallback':>10s} {'speedup':>8s}")
    for name, fast, slow in rows:
        print(f"{name:36s} {fast:8.2f}ms {slow:8.2f}ms {slow / fast:7.1f}x")


if __name__ == "__main__":
    main()
