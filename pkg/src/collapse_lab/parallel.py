"""Replica fan-out.  Results always come back in submission order."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "COLLAPSE_LAB_THREADS"


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


def map_replicas(fn: Callable[[T], R], jobs: Iterable[T], threads: int | None = None) -> list[R]:
    jobs = list(jobs)
    threads = threads or default_threads()
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))
