"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat R]
"""
import argparse
import timeit

import numpy as np

from gainclass import _pykernels

try:
    from gainclass import _ckernels
except ImportError:
    _ckernels = None


def cases(rng):
    x20 = rng.normal(size=20)
    x2k = np.concatenate([rng.normal(-2, 1, 1000), rng.normal(2, 1, 1000)])
    m2k = (x2k < rng.normal(0, 1, 2000)).astype(float)
    xs = np.sort(rng.normal(size=2000))
    return {
        "exhaustive_search N=18": lambda k: k.exhaustive_search(x20[:18], 1e-6),
        "fixed_point N=2000": lambda k: k.fixed_point(x2k, m2k, 1e-6, 500, 1e-12, 1.0),
        "best_flip N=2000": lambda k: k.best_flip(x2k, m2k, 1e-6),
        "interval_scan N=2000": lambda k: k.interval_scan(xs, 1e-6),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = [("python", _pykernels)] + ([("cython", _ckernels)] if _ckernels else [])
    print(f"{'kernel':<26}" + "".join(f"{name:>12}" for name, _ in backends) + ("  speedup" if _ckernels else ""))
    for label, fn in cases(rng).items():
        times = []
        for _, mod in backends:
            times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
        row = f"{label:<26}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"  {times[0] / times[1]:>6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
