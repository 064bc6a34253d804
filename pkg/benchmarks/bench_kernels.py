"""Benchmark the numba kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--quick]

Covers the four hot paths: per-token entropy, union-support KL, moment
reduction, and boosted-tree growth + prediction. Prints per-kernel timings,
speedup, and the maximum absolute disagreement between backends.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from veritrace._kernels import numpy_impl

try:
    from veritrace._kernels import numba_impl
except ImportError:  # pragma: no cover
    numba_impl = None


def _timeit(fn, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def _padded_rows(rng, t, kmax):
    counts = rng.integers(1, kmax + 1, size=t).astype(np.int64)
    lps = np.full((t, kmax), -np.inf)
    ids = np.full((t, kmax), numpy_impl.ID_PAD, dtype=np.int64)
    for i in range(t):
        n = counts[i]
        probs = rng.dirichlet(np.ones(n)) * rng.uniform(0.5, 1.0)
        ids[i, :n] = np.sort(rng.choice(100_000, size=n, replace=False))
        lps[i, :n] = np.log(probs)
    return ids, lps, counts


def bench(quick: bool):
    rng = np.random.default_rng(0)
    t = 5_000 if quick else 50_000
    k = 50
    repeats = 3
    rows = []

    ids_p, lps_p, cnt_p = _padded_rows(rng, t, k)
    ids_q, lps_q, cnt_q = _padded_rows(rng, t, k)
    idx = np.arange(t, dtype=np.int64)

    cases = {
        "entropy_rows": (
            lambda impl: impl.entropy_rows(lps_p, cnt_p, True),
        ),
        "kl_aligned": (
            lambda impl: impl.kl_aligned(
                ids_p, lps_p, cnt_p, ids_q, lps_q, cnt_q, idx, idx, 1e-10
            ),
        ),
        "moments_columns": (
            lambda impl: impl.moments_columns(rng_matrix),
        ),
    }
    rng_matrix = np.random.default_rng(1).normal(size=(t // 10, 530))

    n, f = (800, 200) if quick else (1600, 660)
    xb = np.random.default_rng(2).integers(0, 64, size=(f, n)).astype(np.uint8)
    y = (xb[0] > 31).astype(np.float64)
    p = np.full(n, 0.5)
    g, h = p - y, p * (1 - p)
    feat_idx = np.arange(f, dtype=np.int64)
    n_trees = 20 if quick else 100

    def grow_many(impl):
        out = None
        for _ in range(n_trees):
            out = impl.grow_tree(xb, feat_idx, g, h, 64, 1.0, 1e-12, 3)
        return out[2]

    cases["grow_tree x%d" % n_trees] = (grow_many,)

    feat, sbin, val, _ = numpy_impl.grow_tree(xb, feat_idx, g, h, 64, 1.0, 1e-12, 3)
    thr = sbin.astype(np.float64)
    offsets = np.array([0, feat.shape[0]], dtype=np.int64)
    x_raw = np.ascontiguousarray(xb.T.astype(np.float64))
    cases["predict_forest"] = (
        lambda impl: impl.predict_forest(feat, thr, val, offsets, x_raw),
    )

    print(f"{'kernel':<22}{'numpy (s)':>12}{'numba (s)':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, (fn,) in cases.items():
        t_np, out_np = _timeit(lambda: fn(numpy_impl), repeats)
        if numba_impl is None:
            print(f"{name:<22}{t_np:>12.4f}{'-':>12}{'-':>10}{'-':>14}")
            continue
        fn(numba_impl)  # compile outside the timed region
        t_nb, out_nb = _timeit(lambda: fn(numba_impl), repeats)
        diff = float(np.max(np.abs(np.asarray(out_np) - np.asarray(out_nb))))
        print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}{diff:>14.3e}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    bench(parser.parse_args().quick)
