"""Compare the compiled and pure-numpy projection kernels.

    python3 benchmarks/bench_kernels.py [--repeat 200]

Prints the median time per call of each kernel for a few vector sizes and
the speedup of the compiled backend. The two backends must agree to 1e-10
on every input, which is checked before timing.
"""

import argparse
import sys
import timeit

import numpy as np

from aspal import _pykernels

try:
    from aspal import _ckernels
except ImportError:
    _ckernels = None


def cases(rng, n):
    v = rng.standard_normal(n) * 3
    k = max(1.0, n // 4)
    return {
        "project_simplex": (v,),
        "project_capped_simplex": (v, float(k)),
        "soft_threshold": (v, 0.5),
    }


def median_time(fn, args, repeat):
    times = timeit.repeat(lambda: fn(*args), number=1, repeat=repeat)
    return float(np.median(times))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--sizes", type=int, nargs="+", default=[5, 40, 400, 4000])
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return 1

    rng = np.random.default_rng(0)
    print(f"{'kernel':<24}{'n':>6}{'python (us)':>14}{'cython (us)':>14}{'speedup':>10}")
    for n in args.sizes:
        for name, fargs in cases(rng, n).items():
            py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
            if not np.allclose(py(*fargs), cy(*fargs), atol=1e-10):
                print(f"backends disagree on {name} at n={n}", file=sys.stderr)
                return 1
            tp = median_time(py, fargs, args.repeat) * 1e6
            tc = median_time(cy, fargs, args.repeat) * 1e6
            print(f"{name:<24}{n:>6}{tp:>14.1f}{tc:>14.1f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
