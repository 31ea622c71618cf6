"""Time the compiled kernels against the numpy fallback.

Run from the repository root::

    python3 benchmarks/bench_kernels.py --repeat 5

Each row reports the best wall time over ``--repeat`` runs and the largest
absolute difference between the two backends' outputs.
"""
from __future__ import annotations

import argparse
import sys
import timeit

import numpy as np

from moeapprox import kernels
from moeapprox.kernels import _fallback as fallback


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_case(name, compiled_fn, fallback_fn, repeat):
    t_c = _best(compiled_fn, repeat)
    t_f = _best(fallback_fn, repeat)
    diff = float(np.max(np.abs(compiled_fn() - fallback_fn())))
    print(f"{name:<34s} {t_c * 1e3:10.2f} {t_f * 1e3:10.2f} {t_f / t_c:8.2f}x {diff:10.2e}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)

    if kernels.compiled is None:
        print("compiled extension unavailable; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.Generator(np.random.PCG64(args.seed))
    print(f"{'case':<34s} {'cython ms':>10s} {'numpy ms':>10s} {'speedup':>9s} {'max diff':>10s}")

    # shapes match the n=4 and n=8 rungs of the bundled sine ladder on a 512 grid
    for nx, ny, K in ((512, 512, 256), (512, 512, 1024), (2048, 512, 64)):
        G = rng.random((nx, K))
        E = rng.random((ny, K))
        bench_case(
            f"contract {nx}x{K} . ({ny}x{K})^T",
            lambda: kernels.compiled.contract(G, E, args.workers),
            lambda: fallback.contract(G, E, args.workers),
            args.repeat,
        )
    for rows, K in ((512, 1024), (8192, 64)):
        Z = rng.normal(0.0, 50.0, (rows, K))
        bench_case(
            f"softmax_rows {rows}x{K}",
            lambda: kernels.compiled.softmax_rows(Z, args.workers),
            lambda: fallback.softmax_rows(Z, args.workers),
            args.repeat,
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
