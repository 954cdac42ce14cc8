"""Timing harness for the bit-packed boolean product."""
import time

import numpy as np

from .graph import BoolAdjacency, bool_matmul, naive_bool_matmul


def _best_of(fn, repeats):
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_bool_product(size=1024, density=0.1, repeats=3, seed=0):
    """Time bitset vs naive triple-loop products of two random graphs.

    Both kernels are compiled before timing; the naive loop is the numba build
    of :func:`~hanet.graph.naive_bool_matmul`.  Returns a dict with both
    best-of-``repeats`` times, their ratio and whether the results agree.
    """
    rng = np.random.default_rng(seed)
    a = rng.random((size, size)) < density
    b = rng.random((size, size)) < density
    pa, pb = BoolAdjacency.from_dense(a), BoolAdjacency.from_dense(b)
    bool_matmul(pa, pb)
    naive_bool_matmul(a[:2, :2], b[:2, :2])
    t_bitset, fast = _best_of(lambda: bool_matmul(pa, pb), repeats)
    t_naive, slow = _best_of(lambda: naive_bool_matmul(a, b), repeats)
    return {"size": size, "density": density, "bitset_s": t_bitset, "naive_s": t_naive,
            "speedup": t_naive / t_bitset, "equal": bool(np.array_equal(fast.to_dense(), slow))}
