"""Time the numba kernels against their numpy twins.

Usage: python3 benchmarks/bench_kernels.py [--n 5000] [--repeat 200]

Also times a full ``fit_mle`` under each path by toggling the active kernel
table.  Compilation is excluded (one warm-up call per kernel).
"""

import argparse
import time

import numpy as np

from boxcoxlogit import _kernels
from boxcoxlogit.core import Dataset


def _best(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), float(np.median(times))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(1)
    lx = rng.normal(-1.6, 1.0, args.n)
    eta = -1 + 2 * (np.exp(0.5 * lx) - 1) / 0.5
    y = (rng.random(args.n) < 1 / (1 + np.exp(-eta))).astype(float)
    v = (np.exp(0.5 * lx) - 1) / 0.5

    if not _kernels.HAVE_NUMBA:
        print("numba not installed; only the numpy path is available")
    cases = {
        "boxcox_terms": lambda k: k["boxcox_terms"](lx, 0.5),
        "loglik_derivs": lambda k: k["loglik_derivs"](lx, y, -1.0, 2.0, 0.5, 2),
        "irls": lambda k: k["irls"](v, y, 0.0, 0.0, 50, 1e-10, 1e3),
    }
    print(f"n = {args.n}, repeat = {args.repeat}  (times in ms: best / median)")
    print(f"{'kernel':<16}{'numba':>20}{'numpy':>20}{'speedup':>10}")
    for name, call in cases.items():
        tn = _best(lambda: call(_kernels.NUMBA_KERNELS), args.repeat)
        tp = _best(lambda: call(_kernels.NUMPY_KERNELS), args.repeat)
        print(
            f"{name:<16}{tn[0] * 1e3:>9.3f} /{tn[1] * 1e3:>8.3f}"
            f"{tp[0] * 1e3:>11.3f} /{tp[1] * 1e3:>8.3f}{tp[1] / tn[1]:>9.1f}x"
        )

    from boxcoxlogit.estimation import fit_mle

    data = Dataset(np.exp(lx), y)
    saved = _kernels._active
    try:
        for label, table in (("numba", _kernels.NUMBA_KERNELS), ("numpy", _kernels.NUMPY_KERNELS)):
            _kernels._active = table
            best, med = _best(lambda: fit_mle(data), max(3, args.repeat // 20))
            print(f"fit_mle via {label:<6} {best * 1e3:8.1f} ms best, {med * 1e3:8.1f} ms median")
    finally:
        _kernels._active = saved


if __name__ == "__main__":
    main()
