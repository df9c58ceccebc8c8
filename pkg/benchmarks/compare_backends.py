#!/usr/bin/env python3
"""Compare the numba @njit kernels against the pure-numpy fallback.

Runs the dense / condensed GEMM and im2col kernels on representative
layer geometries with both backends and prints a timing table.  The
active backend for the package itself is chosen via DASNET_BACKEND;
this script imports both implementations directly.
"""

import argparse
import statistics
import time

import numpy as np

from dasnet.kernels import _numpy
from dasnet.wta import make_fc_mask, make_conv_mask

CASES = [
    ("fc 784x300 p=0.2", "fc", dict(K=784, O=300), 0.2),
    ("fc 3136x1024 p=0.2", "fc", dict(K=3136, O=1024), 0.2),
    ("conv 14x14x32 F=5 N=64 p=0.7", "conv",
     dict(H=14, W=14, C=32, F=5, N=64, pad=2), 0.7),
]


def median_time(fn, reps):
    fn()
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_case(impl, kind, geom, p, reps, rng):
    if kind == "fc":
        w = rng.standard_normal((geom["O"], geom["K"])).astype(np.float32)
        x = np.abs(rng.standard_normal(geom["K"])).astype(np.float32)
        mask = make_fc_mask(x, p)
        dense = median_time(lambda: impl.gemv_ordered(w, x), reps)
        cond = median_time(
            lambda: impl.condensed_gemv(w, x, mask.winner_indices), reps
        )
    else:
        h, wd, c, f, n = geom["H"], geom["W"], geom["C"], geom["F"], geom["N"]
        fm = np.abs(rng.standard_normal((h, wd, c))).astype(np.float32)
        wmat = rng.standard_normal((n, c * f * f)).astype(np.float32)
        mask = make_conv_mask(fm, p)
        full = np.arange(c, dtype=np.int64)

        def dense_path():
            col = impl.im2col_channels(fm, full, f, 1, geom["pad"])
            return impl.gemm_ordered(wmat, col)

        def cond_path():
            col = impl.im2col_channels(fm, mask.winner_indices, f, 1, geom["pad"])
            wc = wmat[:, : col.shape[0]]
            return impl.gemm_ordered(wc, col)

        dense = median_time(dense_path, reps)
        cond = median_time(cond_path, reps)
    return dense, cond


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=9)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    backends = [("numpy", _numpy)]
    try:
        from dasnet.kernels import _numba

        backends.append(("numba", _numba))
    except ImportError:
        print("numba unavailable; benchmarking the numpy fallback only")

    header = f"{'case':<32} {'backend':<8} {'dense ms':>10} {'condensed ms':>13} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, kind, geom, p in CASES:
        for name, impl in backends:
            rng = np.random.default_rng(args.seed)
            dense, cond = bench_case(impl, kind, geom, p, args.reps, rng)
            print(
                f"{label:<32} {name:<8} {dense*1e3:>10.3f} {cond*1e3:>13.3f} "
                f"{dense/cond:>7.2f}x"
            )


if __name__ == "__main__":
    main()
