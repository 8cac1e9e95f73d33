"""Ordered worker pool; results never depend on the worker count."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_WORKERS = "FGSCAT_WORKERS"


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(ENV_WORKERS)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        return default


def ordered_map(fn, items, workers: int | None = None) -> list:
    """map(fn, items) with optional threads; output order follows input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
