"""Compare the compiled and numpy TDF kernels.

Usage: python3 benchmarks/bench_kernels.py [--nodes N] [--repeat R]
"""
import argparse
import math
import time

import numpy as np

from mmctop import _kernels_py

try:
    from mmctop import _kernels as _compiled
except ImportError:
    _compiled = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--nodes", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = {
        "tdf3d": (np.array([0.5, 0.4, 0.6, 0.3, 0.1, 0.15, 0.3, math.atan(1.0), -0.2]),
                  rng.uniform(0, 1, (args.nodes, 3))),
        "tdf2d": (np.array([0.5, 0.4, 0.3, 0.05, 0.08, 0.7]), rng.uniform(0, 1, (args.nodes, 2))),
    }
    if _compiled is None:
        print("compiled extension not built; numpy timings only")
    print(f"{'kernel':8s} {'grad':>5s} {'numpy [ms]':>11s} {'cython [ms]':>12s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, (prm, pts) in cases.items():
        for grad in (False, True):
            py = getattr(_kernels_py, name)
            t_py = _best(lambda: py(prm, pts, 6, grad), args.repeat)
            if _compiled is None:
                print(f"{name:8s} {grad!s:>5s} {1e3 * t_py:11.2f}")
                continue
            cy = getattr(_compiled, name)
            t_cy = _best(lambda: cy(prm, pts, 6, grad), args.repeat)
            a, b = py(prm, pts, 6, grad), cy(prm, pts, 6, grad)
            diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a, b) if x is not None)
            print(f"{name:8s} {grad!s:>5s} {1e3 * t_py:11.2f} {1e3 * t_cy:12.2f} "
                  f"{t_py / t_cy:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
