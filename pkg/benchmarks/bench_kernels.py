"""Benchmark the compiled kernel core against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
Builds the reference sc-DA model and times the hot kernels on both backends.
"""
import argparse
import time

import numpy as np

from toruslab._kernels import available_backends
from toruslab.linear_model import IntMatrix2, classify
from toruslab.models import ManeParams, build_mane_sc


def bench(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = available_backends()
    mat = IntMatrix2(3, 1, 1, 1)
    spec = classify(mat)
    model = build_mane_sc(mat, ManeParams(abs(spec.mu_s), abs(spec.mu_u),
                                          -2.6, 216))
    pack = model.pack
    rng = np.random.default_rng(0)
    pts_large = rng.uniform(-1, 2, (20000, 2))
    grid = rng.random((3600, 2))
    probe = rng.random((24, 2))
    branches = np.stack(np.meshgrid(*([np.arange(2)] * 8),
                                    indexing="ij"), -1).reshape(-1, 8).astype(np.int64)
    seeds = rng.random((4096, 2))
    starts = rng.random((10, 2))

    cases = {
        "newton_inverse (20k pts)":
            lambda k: k.newton_inverse(pack, pts_large),
        "h_series depths (60,30) (3.6k pts)":
            lambda k: k.h_series(pack, grid, 60, 30),
        "e2_angles 256 branches depth 8 (24 pts)":
            lambda k: k.e2_angles(pack, probe, branches, tail=4),
        "e1_leaf_batch 500 steps (10 leaves)":
            lambda k: k.e1_leaf_batch(pack, starts, 500, 2e-3, 40),
        "newton_periodic n=2 (4096 seeds)":
            lambda k: k.newton_periodic(pack, 2, (0.0, 0.0), seeds),
    }

    names = list(backends)
    width = max(len(c) for c in cases)
    header = f"{'kernel':<{width}} " + " ".join(f"{n:>10}" for n in names)
    if len(names) == 2:
        header += f" {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for label, call in cases.items():
        times = {}
        for name in names:
            times[name] = bench(lambda: call(backends[name]), args.repeat)
        row = f"{label:<{width}} " + " ".join(f"{times[n]:>9.4f}s" for n in names)
        if "py" in times and "cy" in times:
            row += f" {times['py'] / times['cy']:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
