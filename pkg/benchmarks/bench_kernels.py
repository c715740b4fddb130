"""Benchmark the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Times satstack._kernels (Cython) and satstack._kernels_py on the three hot
kernels at pipeline-realistic sizes and prints per-case speedups.  Exits
with a note instead of timings if the extension is not built.
"""

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from satstack import _kernels_py  # noqa: E402


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_cases(rng):
    cases = []

    for n, m in ((200, 200), (625, 10_000), (2000, 40_000)):
        ax, ay = rng.normal(size=n), rng.normal(size=n)
        bx, by = rng.normal(size=m), rng.normal(size=m)
        cases.append(
            (
                f"tps_kernel_matrix {n}x{m}",
                lambda impl, a=(ax, ay, bx, by): impl.tps_kernel_matrix(*a),
            )
        )

    for n, q in ((100, 10_000), (1000, 40_000)):
        px, py = rng.normal(size=n), rng.normal(size=n)
        pv = rng.normal(size=n)
        qx, qy = rng.normal(size=q), rng.normal(size=q)
        cases.append(
            (
                f"idw_predict {n}pts x {q}q",
                lambda impl, a=(px, py, pv, qx, qy): impl.idw_predict(*a, 2.0, 1e-12),
            )
        )

    for side in (200, 600):
        mask = np.ascontiguousarray(
            (rng.random((side, side)) > 0.45).astype(np.uint8)
        )
        cases.append(
            (
                f"label_components {side}x{side}",
                lambda impl, m=mask: impl.label_components(m),
            )
        )
    return cases


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    try:
        from satstack import _kernels
    except ImportError:
        print("compiled extension not built (run `python setup.py build_ext "
              "--inplace`); nothing to compare")
        return 1

    rng = np.random.default_rng(12345)
    cases = make_cases(rng)
    width = max(len(name) for name, _ in cases)
    print(f"{'case':<{width}}  {'cython':>10}  {'numpy/py':>10}  {'speedup':>8}")
    for name, runner in cases:
        t_ext = _time(lambda: runner(_kernels), args.repeat)
        t_py = _time(lambda: runner(_kernels_py), args.repeat)
        print(f"{name:<{width}}  {t_ext * 1e3:>8.2f}ms  {t_py * 1e3:>8.2f}ms  "
              f"{t_py / t_ext:>7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
