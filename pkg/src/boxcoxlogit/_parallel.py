"""Order-preserving map over independent tasks.

Worker count comes from ``BOXCOX_THREADS`` (0 or unset = one per CPU).
With a single worker everything runs in-process, which keeps tracebacks
readable and avoids pickling.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def n_workers() -> int:
    raw = os.environ.get("BOXCOX_THREADS", "0").strip() or "0"
    try:
        k = int(raw)
    except ValueError:
        k = 0
    if k <= 0:
        k = os.cpu_count() or 1
    return k


def pmap(func, items, workers: int | None = None) -> list:
    items = list(items)
    workers = n_workers() if workers is None else workers
    workers = min(workers, len(items))
    if workers <= 1:
        return [func(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, items, chunksize=max(1, len(items) // (4 * workers))))
