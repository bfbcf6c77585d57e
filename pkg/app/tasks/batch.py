"""
Concurrent batch execution for independent per-item work (sweep files,
bench grid points). Results always come back in input order so emitted
files do not depend on scheduling.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from app.core.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def run_ordered(func: Callable[[T], R], items: Iterable[T],
                max_workers: Optional[int] = None) -> List[R]:
    """Apply func to every item, possibly concurrently, preserving order."""
    items = list(items)
    workers = max_workers or settings.MAX_WORKERS
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        results = list(pool.map(func, items))
    logger.info(f"Processed {len(items)} items with {min(workers, len(items))} workers")
    return results
