#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure NumPy fallback.

The kernels sit in the innermost resampling loop (seed derivation,
uniform mapping, grid lookup) and run once per (feature, draw, row).
Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from crtkit import _kernels_py as pure

try:
    from crtkit import _kernels as compiled
except ImportError:
    compiled = None


CASES = [
    ("seed_grid 1000x100", lambda impl: impl.seed_grid(0xBEEF, 1000, 100)),
    ("uniform_grid 1000x100", lambda impl: impl.uniform_grid(0xBEEF, 1000, 100)),
    ("uniforms 1e6", None),  # filled in below; needs shared input
    ("grid_lookup 1000x100 K=200", None),
    ("categorical_lookup L=4", None),
]


def build_shared_inputs():
    rng = np.random.default_rng(7)
    seeds = rng.integers(0, 2**64, size=1_000_000, dtype=np.uint64)
    grid = np.sort(rng.standard_normal((100, 200)), axis=1)
    u = rng.random((1000, 100))
    cum = np.cumsum(rng.dirichlet(np.ones(4), size=100), axis=1)
    return seeds, grid, u, cum


def bench(fn, repeats: int) -> float:
    fn()  # warm-up
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()

    seeds, grid, u, cum = build_shared_inputs()
    cases = [
        ("seed_grid 1000x100", lambda impl: impl.seed_grid(0xBEEF, 1000, 100)),
        ("uniform_grid 1000x100", lambda impl: impl.uniform_grid(0xBEEF, 1000, 100)),
        ("uniforms 1e6", lambda impl: impl.uniforms(seeds)),
        ("grid_lookup 1000x100 K=200", lambda impl: impl.grid_lookup(grid, u)),
        ("categorical_lookup L=4", lambda impl: impl.categorical_lookup(cum, u)),
    ]

    if compiled is None:
        print("compiled extension not built; benchmarking the fallback only")
    header = f"{'kernel':<28} {'pure (ms)':>10} {'compiled (ms)':>14} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, fn in cases:
        pure_time = bench(lambda: fn(pure), args.repeats) * 1e3
        if compiled is not None:
            compiled_time = bench(lambda: fn(compiled), args.repeats) * 1e3
            ratio = pure_time / compiled_time if compiled_time > 0 else float("inf")
            print(f"{name:<28} {pure_time:>10.3f} {compiled_time:>14.3f} {ratio:>7.1f}x")
            out_pure, out_compiled = fn(pure), fn(compiled)
            assert np.array_equal(out_pure, out_compiled), f"{name}: backends disagree"
        else:
            print(f"{name:<28} {pure_time:>10.3f} {'-':>14} {'-':>8}")
    if compiled is not None:
        print("\nbackends produced bit-identical outputs on every case")


if __name__ == "__main__":
    main()
