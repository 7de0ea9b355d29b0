"""Compare the compiled and numpy raster kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Both backends are imported
directly, so the comparison does not depend on DUALMAPPER_PURE_PYTHON.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from dualmapper import _kernels_py

try:
    from dualmapper import _kernels_cy
except ImportError:  # extension not built
    _kernels_cy = None


def _cases(size: int, n_points: int, n_segs: int, seed: int):
    rng = np.random.default_rng(seed)
    rows = rng.uniform(-10, size + 10, n_points)
    cols = rng.uniform(-10, size + 10, n_points)
    segs = rng.uniform(0, size, (n_segs, 4))
    return {
        "count_points": lambda k: k.count_points(rows, cols, size, size),
        "render_segments": lambda k: k.render_segments(segs, size, size, 5.0),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1024)
    ap.add_argument("--points", type=int, default=2_000_000)
    ap.add_argument("--segments", type=int, default=2_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = {"python": _kernels_py}
    if _kernels_cy is not None:
        backends["cython"] = _kernels_cy
    print(f"region {args.size}x{args.size}, {args.points} points, {args.segments} segments")
    print(f"{'kernel':<16} {'backend':<8} {'best ms':>10} {'speedup':>8}")
    for name, fn in _cases(args.size, args.points, args.segments, args.seed).items():
        outs, times = {}, {}
        for label, mod in backends.items():
            outs[label] = fn(mod)
            times[label] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        if len(outs) == 2 and not np.array_equal(outs["python"], outs["cython"]):
            raise SystemExit(f"{name}: backends disagree")
        for label, t in times.items():
            speedup = times["python"] / t
            print(f"{name:<16} {label:<8} {1e3 * t:>10.2f} {speedup:>7.2f}x")


if __name__ == "__main__":
    main()
