"""Order-preserving map over a process pool."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def pmap(fn, items, jobs: int = 1):
    items = list(items)
    jobs = min(max(int(jobs or 1), 1), len(items) or 1)
    if jobs == 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def default_jobs() -> int:
    return os.cpu_count() or 1
