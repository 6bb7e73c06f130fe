"""Small shared helpers: ordered parallel map and Halton sequences."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np


def map_ordered(fn, items, threads: int = 1):
    """Apply fn over items, preserving order; threads > 1 uses a pool.

    Results are merged in input order regardless of completion order, so
    parallel runs are deterministic.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def halton(count: int, dim: int, *, offset: int = 0) -> np.ndarray:
    """Low-discrepancy Halton points in [0, 1)^dim, deterministic for a seed offset."""
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29]
    if dim > len(primes):
        raise ValueError("halton helper supports up to 10 dimensions")
    idx = np.arange(offset + 1, offset + count + 1)
    out = np.empty((count, dim))
    for d in range(dim):
        base = primes[d]
        n = idx.astype(np.int64)
        value = np.zeros(count)
        denom = np.ones(count)
        while np.any(n > 0):
            denom *= base
            value += (n % base) / denom
            n //= base
        out[:, d] = value
    return out
