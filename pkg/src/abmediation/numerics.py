"""Reproducible reductions over rows.

Rows are split into fixed-size chunks whose boundaries depend only on the
row count.  Each chunk is reduced with numpy (pairwise summation) and the
chunk partials are combined with ``math.fsum``, which is exactly rounded.
The result is therefore bit-identical for any thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

CHUNK_ROWS = 1 << 16
THREADS_ENV = "ABMEDIATION_THREADS"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


def chunk_bounds(n: int, chunk_rows: int = CHUNK_ROWS) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk_rows, n)) for lo in range(0, n, chunk_rows)]


def fsum_stack(partials: list[np.ndarray]) -> np.ndarray:
    """Entrywise exactly-rounded sum of equally shaped arrays."""
    stacked = np.stack(partials)
    flat = stacked.reshape(len(partials), -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])])
    return out.reshape(stacked.shape[1:])


def chunked_sum(
    fn: Callable[[int, int], np.ndarray],
    n: int,
    threads: int | None = None,
    chunk_rows: int = CHUNK_ROWS,
) -> np.ndarray:
    """Sum ``fn(lo, hi)`` over the fixed chunk partition of ``range(n)``."""
    bounds = chunk_bounds(n, chunk_rows)
    threads = default_threads() if threads is None else threads
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(lambda b: np.asarray(fn(*b), dtype=float), bounds))
    else:
        partials = [np.asarray(fn(lo, hi), dtype=float) for lo, hi in bounds]
    return fsum_stack(partials)
