"""Chunked element loops with an optional thread pool.

Results are always returned in chunk order, so reductions built on top
of :func:`map_chunks` do not depend on the worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

CHUNK = 2048


def worker_count() -> int:
    """Workers allowed by ``DIVDIV_THREADS`` (default 1)."""
    raw = os.environ.get("DIVDIV_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"DIVDIV_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def chunks(n: int, size: int = CHUNK) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)] or [slice(0, 0)]


def map_chunks(func, n: int, size: int | None = None) -> list:
    """Apply ``func(slice)`` to consecutive element ranges, preserving order."""
    parts = chunks(n, size or CHUNK)
    workers = min(worker_count(), len(parts))
    if workers == 1:
        return [func(s) for s in parts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, parts))
