"""Timing comparison of the compiled kernels against the numpy fallback.

Run as: python3 benchmarks/bench_kernels.py [--repeat N]
Prints one row per kernel with both times and the speedup factor. The
two backends are imported directly so one process measures both.
"""

import argparse
import time

import numpy as np

from evsev._kernels import fallback

try:
    from evsev._kernels import _core
except ImportError:
    _core = None


def _time(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _split_args(rng, n=5000):
    vals = np.sort(np.round(rng.normal(size=n), 2))
    labels = rng.integers(0, 3, n)
    return vals, labels


def bench_cases(rng):
    vals, labels = _split_args(rng)
    grad = rng.normal(size=vals.size)
    hess = rng.random(vals.size) + 0.1
    yield "best_gini_split", (vals, labels, 3, 2), \
        lambda m: m.best_gini_split
    yield "best_gain_split", (vals, grad, hess, 1.0, 2), \
        lambda m: m.best_gain_split

    X = rng.normal(size=(2000, 12))
    Q = rng.normal(size=(500, 12))
    excl = np.full(500, -1, dtype=np.int64)
    yield "knn_indices", (X, Q, 5, excl), lambda m: m.knn_indices

    b, T, d, n = 8, 64, 32, 16
    dA = np.exp(-rng.random((b, T, d, n)))
    dBx = rng.normal(size=(b, T, d, n))
    C = rng.normal(size=(b, T, n))
    D = rng.normal(size=d)
    x = rng.normal(size=(b, T, d))
    yield "ssm_scan_forward", (dA, dBx, C, D, x), \
        lambda m: m.ssm_scan_forward

    _, h = fallback.ssm_scan_forward(dA, dBx, C, D, x)
    dy = rng.normal(size=x.shape)
    yield "ssm_scan_backward", (dy, h, dA, C, D, x), \
        lambda m: m.ssm_scan_backward

    A = -rng.random((d, n))
    dt = rng.random((b, T, d)) + 0.05
    dAs = np.exp(dt[..., None] * A)
    B = rng.normal(size=(b, T, n))
    yield "selective_scan_forward", (dAs, dt, B, C, D, x), \
        lambda m: m.selective_scan_forward

    _, hs = fallback.selective_scan_forward(dAs, dt, B, C, D, x)
    yield "selective_scan_backward", (dy, hs, dAs, dt, A, B, C, D, x), \
        lambda m: m.selective_scan_backward


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5,
                        help="best-of-N timing per kernel")
    args = parser.parse_args()
    if _core is None:
        print("compiled extension unavailable; nothing to compare")
        return

    rng = np.random.default_rng(0)
    print(f"{'kernel':<26} {'fallback':>10} {'compiled':>10} {'speedup':>8}")
    for name, call_args, pick in bench_cases(rng):
        t_fb = _time(pick(fallback), call_args, args.repeat)
        t_c = _time(pick(_core), call_args, args.repeat)
        print(f"{name:<26} {t_fb * 1e3:>8.2f}ms {t_c * 1e3:>8.2f}ms "
              f"{t_fb / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
