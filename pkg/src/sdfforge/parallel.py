"""Deterministic order-preserving parallel map.

Work is split per item, never re-chunked by worker count, so results are
identical for any thread count; threads only change wall time.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    """Thread count from SDFFORGE_THREADS, defaulting to 1."""
    raw = os.environ.get("SDFFORGE_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items, threads: int = 1) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
