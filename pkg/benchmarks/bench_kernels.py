"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from capadmt import _kernels_py

try:
    from capadmt import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _weights_args(d, spread):
    v = np.geomspace(1.0, spread, d)
    c = 1.0 - v.min() / v
    return c, float(np.sum(np.log(v.min() / v))), 1e-12, 100_000


CASES = {
    "complex_normals 100000x20": (lambda m: m.complex_normals(1, 0, 0, 100_000, 20)),
    "complex_normals 20000x400": (lambda m: m.complex_normals(1, 0, 0, 20_000, 400)),
    "mixture_weights D=20": (lambda m, a=_weights_args(20, 1e-2): m.mixture_weights(*a)),
    "mixture_weights D=400": (lambda m, a=_weights_args(400, 0.5): m.mixture_weights(*a)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [("python", _kernels_py)] + ([("cython", _kernels_c)] if _kernels_c else [])
    print(f"{'case':30s} " + " ".join(f"{n:>12s}" for n, _ in backends) + ("   speedup" if len(backends) == 2 else ""))
    for name, fn in CASES.items():
        times = []
        for _, mod in backends:
            fn(mod)  # warm-up
            times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
        row = f"{name:30s} " + " ".join(f"{t * 1e3:10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"   {times[0] / times[1]:7.1f}x"
        print(row)
    if _kernels_c is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
