"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from arblab import _pykernels

try:
    from arblab import _ckernels
except ImportError:
    _ckernels = None

SIZES = [(128, 10, 64), (128, 100, 64), (1024, 10, 256), (8, 5, 6)]


def cases(b, c, d, seed=0):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(b, c)) * 3
    H = rng.normal(size=(b, d))
    y = rng.integers(0, c, size=b)
    counts = np.maximum(np.bincount(y, minlength=c), 1).astype(float)
    return Z, H, y, counts


def bench(fn, repeat):
    t = timeit.Timer(fn)
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the numpy backend is available")
    print(f"{'kernel':<11}{'b':>6}{'c':>5}{'d':>5}{'numpy us':>12}{'cython us':>12}{'speedup':>9}")
    for b, c, d in SIZES:
        Z, H, y, n = cases(b, c, d)
        G = _pykernels.loss_grad(Z, y, n)[1]
        jobs = {
            "loss_grad": lambda m: m.loss_grad(Z, y, n),
            "class_parts": lambda m: m.class_parts(G, H, y, c),
        }
        for name, job in jobs.items():
            tp = bench(lambda: job(_pykernels), args.repeat) * 1e6
            if _ckernels is None:
                print(f"{name:<11}{b:>6}{c:>5}{d:>5}{tp:>12.1f}{'-':>12}{'-':>9}")
                continue
            tc = bench(lambda: job(_ckernels), args.repeat) * 1e6
            print(f"{name:<11}{b:>6}{c:>5}{d:>5}{tp:>12.1f}{tc:>12.1f}{tp / tc:>8.1f}x")


if __name__ == "__main__":
    main()
