"""Time the hot kernels under numba and under the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]

The fallback versions live in ``groundstate._accel.reference``; the active
backend is whatever ``GROUNDSTATE_DISABLE_NUMBA`` selected at import.
"""

import argparse
import timeit

import numpy as np

from groundstate import _accel
from groundstate.geometry import icosahedron, subdivide


def _cases(rng):
    n = 20_000
    off = -rng.uniform(0.1, 1.0, n - 1)
    diag = 3.0 + rng.uniform(0.0, 1.0, n)
    b = rng.standard_normal(n)
    v, f = icosahedron()
    for _ in range(5):
        v, f = subdivide(v, f)
    m = v.shape[0]
    vals = rng.standard_normal(m)
    partner = rng.permutation(m).astype(np.int64)
    inside = rng.random(m) < 0.5
    return {
        "tridiag_solve": (off, diag, b),
        "tridiag_matvec": (off, diag, b),
        "cotan_assembly": (v, f),
        "polarize_kernel": (vals, partner, inside),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = _cases(rng)
    print(f"active backend: {_accel.BACKEND}")
    print(f"{'kernel':<16} {'numpy [ms]':>11} {'active [ms]':>12} {'speedup':>8}")
    for name, call_args in cases.items():
        fast = getattr(_accel, name)
        slow = _accel.reference[name]
        fast(*call_args)  # compile outside the timing
        t_fast = min(timeit.repeat(lambda: fast(*call_args), number=1, repeat=args.repeat))
        t_slow = min(timeit.repeat(lambda: slow(*call_args), number=1, repeat=args.repeat))
        print(f"{name:<16} {1e3 * t_slow:11.3f} {1e3 * t_fast:12.3f} {t_slow / t_fast:8.1f}x")


if __name__ == "__main__":
    main()
