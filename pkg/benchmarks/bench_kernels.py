"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Shapes match a reduced training batch (32 samples, 17 joints x 64 channels,
60 frames, kernel 31) and the default-config single sample.
"""
import argparse
import time

import numpy as np

from gaitmixer.numerics import kernels

CASES = {
    "batch32_d64": (32, 17 * 64, 60, 31),
    "single_d256": (1, 17 * 256, 60, 31),
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.BACKEND != "cython":
        print("compiled extension not available; only the numpy fallback can be timed")
    py = kernels.python_kernels
    rng = np.random.default_rng(0)
    print(f"{'case':<14}{'kernel':<12}{'compiled ms':>12}{'numpy ms':>10}{'speedup':>9}{'max |diff|':>12}")
    for name, (n, c, t, k) in CASES.items():
        xp = rng.standard_normal((n, c, t + k - 1))
        w = rng.standard_normal((c, k))
        g = rng.standard_normal((n, c, t))
        x = rng.standard_normal((n, c, t))
        rows = [
            ("dw fwd", lambda: kernels.dwconv_forward(xp, w), lambda: py.dwconv_forward(xp, w)),
            ("dw bwd", lambda: kernels.dwconv_backward(g, xp, w),
             lambda: py.dwconv_backward(g, xp, w)),
            ("gelu", lambda: kernels.gelu_forward(x, True), lambda: py.gelu_forward(x, True)),
        ]
        for label, fast, slow in rows:
            a, b = fast(), slow()
            a = a if isinstance(a, tuple) else (a,)
            b = b if isinstance(b, tuple) else (b,)
            diff = max(float(np.max(np.abs(u - v))) for u, v in zip(a, b))
            tf, ts = best_of(fast, args.repeat), best_of(slow, args.repeat)
            print(f"{name:<14}{label:<12}{1e3 * tf:12.2f}{1e3 * ts:10.2f}{ts / tf:9.2f}{diff:12.2e}")


if __name__ == "__main__":
    main()
