#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the pure numpy fallback.

Times the three hot kernels on workloads shaped like a large run: dense
distance matrices, density clustering, and batch sphere detection. Run as

    python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from ofcl import _kernels


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def workloads(rng):
    x = rng.normal(size=(1500, 64))
    y = rng.normal(size=(1200, 64))
    cluster_pts = rng.normal(size=(900, 16))
    cluster_pts[:300] *= 0.05  # one dense blob plus scatter
    queries = rng.normal(size=(4000, 16))
    centroids = rng.normal(size=(60, 16))
    radii = rng.uniform(0.2, 1.0, size=60)
    small_q = rng.normal(size=(800, 16))
    small_c = rng.normal(size=(30, 16))
    small_r = rng.uniform(0.2, 1.0, size=30)
    return [
        ("pairwise_dist 1500x1200x64", lambda b: b.pairwise_dist(x, y)),
        ("dbscan_labels 900x16", lambda b: b.dbscan_labels(cluster_pts, 0.4, 5)),
        ("detect_batch 4000q 60s", lambda b: b.detect_batch(queries, centroids, radii)),
        (
            "detect_batch 800q 30s (run scale)",
            lambda b: b.detect_batch(small_q, small_c, small_r),
        ),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3, help="timing repeats, best kept")
    args = parser.parse_args()

    names = _kernels.available_backends()
    if "compiled" not in names:
        print("note: compiled extension not built; timing the fallback only")
    rng = np.random.default_rng(0)
    rows = []
    for label, call in workloads(rng):
        timings = {}
        for name in names:
            backend = _kernels.get_backend(name)
            timings[name] = best_of(lambda: call(backend), args.repeats)
        rows.append((label, timings))

    width = max(len(r[0]) for r in rows)
    header = f"{'workload':<{width}}  " + "  ".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, timings in rows:
        line = f"{label:<{width}}  " + "  ".join(f"{timings[n] * 1e3:>10.2f}ms" for n in names)
        if len(names) == 2:
            line += f"  {timings['python'] / timings['compiled']:>7.2f}x"
        print(line)


if __name__ == "__main__":
    main()
