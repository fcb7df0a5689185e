"""Deterministic fan-out helpers.

All heavy loops in the library are pure functions over immutable data, so
batches can be dispatched to a thread pool.  Determinism is preserved by
fixed batch boundaries and by reducing results in batch order; the worker
count only changes wall time, never values.  ``LIPJET_THREADS`` caps the
pool size.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_ENV_VAR = "LIPJET_THREADS"


def worker_count() -> int:
    raw = os.environ.get(_ENV_VAR)
    if raw is not None:
        try:
            n = int(raw)
        except ValueError:
            n = 1
        return max(1, n)
    return max(1, min(8, os.cpu_count() or 1))


def split_batches(n_items: int, n_batches: int) -> list[range]:
    """Split range(n_items) into at most n_batches contiguous ranges."""
    n_batches = max(1, min(n_batches, n_items)) if n_items else 1
    step = -(-n_items // n_batches) if n_items else 1
    return [range(lo, min(lo + step, n_items)) for lo in range(0, n_items, step)]


def map_batches(fn, batches):
    """Apply ``fn`` to every batch, in parallel, returning results in order."""
    workers = worker_count()
    if workers == 1 or len(batches) <= 1:
        return [fn(b) for b in batches]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, batches))
