"""Compare the compiled kernels with the NumPy fallback.

Run ``python3 benchmarks/bench_core.py``; prints one line per kernel with
the best-of-``repeat`` wall time of each backend, the speedup and the
maximum absolute difference between their outputs.
"""

import argparse
import time

import numpy as np

from stablemv import _core_py

try:
    from stablemv import _core
except ImportError:
    _core = None


def best_time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n):
    rng = np.random.default_rng(0)
    ids = np.arange(n, dtype=np.int64)
    x = rng.standard_normal(n)
    q = rng.standard_normal(n)
    src = np.sort(rng.standard_normal(n))
    lo = np.searchsorted(src, q - 0.05).astype(np.int64)
    hi = np.searchsorted(src, q + 0.05).astype(np.int64)
    m = min(n, 2048)
    return {
        "keyed_uniforms": (lambda c, out: c.keyed_uniforms(12345, ids, 3, out), (n, 4)),
        "stable_increments": (lambda c, out: c.stable_increments(12345, ids, 3, 1.5, 0.1, out), (n, 1)),
        "conv_tanh_self_1d": (lambda c, out: c.conv_tanh_self_1d(x[:m], 0.5, 1.0, out), (m,)),
        "conv_tanh_cross_1d": (lambda c, out: c.conv_tanh_cross_1d(q[:m], x, 0.5, 1.0, out), (m,)),
        "conv_tanh_window_1d": (lambda c, out: c.conv_tanh_window_1d(q, src, lo, hi, 0.5, 1.0,
                                                                     float(n), out), (n,)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'kernel':<22}{'cython s':>12}{'python s':>12}{'speedup':>10}{'max diff':>12}")
    for name, (call, shape) in cases(args.n).items():
        out_c, out_p = np.empty(shape), np.empty(shape)
        tc = best_time(lambda: call(_core, out_c), args.repeat)
        tp = best_time(lambda: call(_core_py, out_p), args.repeat)
        diff = float(np.max(np.abs(out_c - out_p)))
        print(f"{name:<22}{tc:>12.4g}{tp:>12.4g}{tp / tc:>10.1f}{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
