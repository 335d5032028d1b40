"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--n 300] [--repeat 5]
"""
import argparse
import statistics
import time

import numpy as np

from crch import _core, clusterrep


def _time(fn, repeat):
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def _use(backend):
    impl = _core.BACKENDS[backend]
    for name in ("best_triplet_pair", "merge_rows", "earliest_start", "mean_cross_distance"):
        setattr(_core, name, getattr(impl, name))


def cases(n, rng):
    pts = rng.normal(size=(n, 3))
    diff = pts[:, None] - pts[None]
    D = np.ascontiguousarray(np.sqrt((diff ** 2).sum(-1)))
    active = np.ones(n, dtype=np.uint8)
    keys = np.arange(n, dtype=np.int64)
    starts = sorted(rng.uniform(0, 1000, size=n).tolist())
    ends = [s + 0.1 for s in starts]
    a, b = rng.normal(size=(n, 4)), rng.normal(size=(n, 4))
    return {
        "best_triplet_pair": lambda k: k.best_triplet_pair(D, active, keys, 3, 0.5),
        "earliest_start": lambda k: k.earliest_start(starts, ends, 0.0, 5.0),
        "mean_cross_distance": lambda k: k.mean_cross_distance(a, b),
        "agglomerate": lambda k: clusterrep.agglomerate(pts, 3, stop_percentile=None),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "cython" not in _core.BACKENDS:
        print("compiled backend not built; nothing to compare")
        return
    rng = np.random.default_rng(0)
    fns = cases(args.n, rng)
    print(f"n={args.n}  median of {args.repeat}")
    print(f"{'kernel':<22}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for name, fn in fns.items():
        res = {}
        for backend in ("python", "cython"):
            _use(backend)
            impl = _core.BACKENDS[backend]
            res[backend] = _time(lambda: fn(impl), args.repeat)
        print(f"{name:<22}{res['python'] * 1e3:>14.3f}{res['cython'] * 1e3:>14.3f}"
              f"{res['python'] / res['cython']:>10.1f}x")


if __name__ == "__main__":
    main()
