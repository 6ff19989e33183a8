"""
Worker pool helpers.

Work units are independent; results come back in input order so any
reduction over them is independent of the worker count.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

T = TypeVar("T")
R = TypeVar("R")

logger = logging.getLogger(__name__)


def default_workers() -> int:
    return os.cpu_count() or 1


def parallel_map(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """Map fn over items with at most `workers` threads, preserving order"""
    items = list(items)
    workers = max(1, min(workers or default_workers(), len(items) or 1))
    if workers == 1:
        return [fn(item) for item in items]
    logger.debug(f"Dispatching {len(items)} work units to {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
