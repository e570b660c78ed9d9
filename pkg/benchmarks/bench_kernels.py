"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--points 4000] [--reps 5]
"""

import argparse
import time

import numpy as np

from trua import _pykernels

try:
    from trua import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def _best(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_rrcf(mod, points, window):
    def run():
        tree = mod.RCTree(points.shape[1], window, 7)
        for i, p in enumerate(points):
            if i >= window:
                tree.forget(i - window)
            tree.insert(i, p.tolist())
            tree.codisp(i)
    return run


def bench_trials(mod, starts, ends, times, reps):
    rs = np.arange(1, 9, dtype=np.int64)
    seeds = list(range(101, 109))

    def run():
        for lo in range(0, 40_000, 4000):
            mod.failure_trials(starts, ends, times, lo, lo + 4000, 14400, rs, seeds, reps)
    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=4000)
    ap.add_argument("--window", type=int, default=256)
    ap.add_argument("--pilots", type=int, default=20_000)
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    rng = np.random.default_rng(0)
    points = rng.normal(size=(args.points, 3))
    starts = np.sort(rng.integers(0, 2_000_000, size=args.pilots)).astype(np.int64)
    ends = starts + rng.integers(1, 80_000, size=args.pilots)
    times = np.arange(50_000, 2_000_000, 6000, dtype=np.int64)

    cases = {
        f"rrcf insert+codisp ({args.points} pts, window {args.window})":
            lambda m: bench_rrcf(m, points, args.window),
        f"failure_trials ({args.pilots} pilots, r=1..8, reps {args.reps})":
            lambda m: bench_trials(m, starts, ends, times, args.reps),
    }
    print(f"{'kernel':<52}{'python s':>10}{'cython s':>10}{'speedup':>9}")
    for name, make in cases.items():
        py = _best(make(_pykernels), args.repeat)
        cy = _best(make(_kernels), args.repeat)
        print(f"{name:<52}{py:>10.3f}{cy:>10.4f}{py / cy:>8.1f}x")


if __name__ == "__main__":
    main()
