"""Benchmark the numba kernels against the pure-numpy fallback.

Runs the three hot kernels (fixed-radius neighbor lists, the
orthogonality mask, and dbscan label propagation) on generated scene
clouds of increasing size and prints per-backend timings. The numba
backend is warmed up once before timing so JIT compilation does not
count against it.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

from rebartie._kernels import (HAS_NUMBA, dbscan_labels, neighbor_csr,
                               ortho_mask)
from rebartie.extraction import OrthoFilterParams
from rebartie.pipeline import condition_spec, demo_conditions
from rebartie.scenes import generate_scene

SIZES = ("4n-clean", "16n-clean", "36n-clean")
DBSCAN_EPS = 0.12
DBSCAN_MIN_PTS = 10


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_cloud(points, backend, repeats, filt):
    indptr, indices = neighbor_csr(points, filt.r_eps, backend=backend)
    out = {"neighbor_csr": best_of(
        lambda: neighbor_csr(points, filt.r_eps, backend=backend), repeats)}
    out["ortho_mask"] = best_of(
        lambda: ortho_mask(points, indptr, indices, filt.r_res, filt.p_res,
                           filt.min_neighbors, filt.rng_seed, backend=backend),
        repeats)
    counts = np.diff(indptr)
    core = counts >= DBSCAN_MIN_PTS
    ip2, idx2 = neighbor_csr(points, DBSCAN_EPS, backend=backend)
    out["dbscan_labels"] = best_of(
        lambda: dbscan_labels(ip2, idx2, core, backend=backend), repeats)
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5,
                    help="timing repeats per kernel (best is reported)")
    args = ap.parse_args(argv)

    if not HAS_NUMBA:
        print("numba is not installed; only the numpy backend will run")

    conditions = {c["name"]: c for c in demo_conditions()}
    filt = OrthoFilterParams()
    print(f"{'condition':>10} {'points':>8} {'kernel':>14} "
          f"{'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for name in SIZES:
        scene, _, _ = generate_scene(condition_spec(conditions[name], seed=0))
        pts = scene.points
        if HAS_NUMBA:
            bench_cloud(pts[:200], "numba", 1, filt)  # warm the JIT cache
        rows = {"numpy": bench_cloud(pts, "numpy", args.repeats, filt)}
        if HAS_NUMBA:
            rows["numba"] = bench_cloud(pts, "numba", args.repeats, filt)
        for kernel in ("neighbor_csr", "ortho_mask", "dbscan_labels"):
            np_ms = rows["numpy"][kernel] * 1e3
            if HAS_NUMBA:
                nb_ms = rows["numba"][kernel] * 1e3
                print(f"{name:>10} {len(pts):>8} {kernel:>14} "
                      f"{np_ms:>10.2f} {nb_ms:>10.2f} {np_ms / nb_ms:>7.1f}x")
            else:
                print(f"{name:>10} {len(pts):>8} {kernel:>14} "
                      f"{np_ms:>10.2f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
