"""
prefetch.py - Bounded parallel work for data preparation (scene generation, batch assembly)

Results always come back in submission order, so parallelism never changes outputs.
KD_THREADS caps the number of workers (default 1: everything runs inline).
"""

import asyncio
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Iterator, List, Optional, TypeVar

import numpy as np

from cls2det.errors import ConfigError
from cls2det.utils.logger import get_logger, setup_logger

setup_logger()
logger = get_logger()

T = TypeVar("T")
R = TypeVar("R")


def thread_budget(default: int = 1) -> int:
    raw = os.environ.get("KD_THREADS")
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"KD_THREADS must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"KD_THREADS must be >= 1, got {value}")
    return value


async def _gather_bounded(fn: Callable[[T], R], items: List[T], parallel: int) -> List[R]:
    sem = asyncio.Semaphore(parallel)

    async def sem_call(item):
        async with sem:
            return await asyncio.to_thread(fn, item)

    return await asyncio.gather(*(sem_call(item) for item in items))


def map_bounded(fn: Callable[[T], R], items: Iterable[T], parallel: Optional[int] = None) -> List[R]:
    """fn over items with at most `parallel` calls in flight; result i belongs to item i."""
    items = list(items)
    parallel = thread_budget() if parallel is None else int(parallel)
    if parallel <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"Running {len(items)} tasks with {parallel} workers")
    return list(asyncio.run(_gather_bounded(fn, items, parallel)))


def prefetch(make: Callable[[int], R], count: int, depth: Optional[int] = None) -> Iterator[R]:
    """
    Yield make(0), make(1), ... make(count - 1) in order while up to `depth` later items
    are prepared on worker threads.
    """
    depth = thread_budget() if depth is None else int(depth)
    if depth <= 1:
        for i in range(count):
            yield make(i)
        return
    with ThreadPoolExecutor(max_workers=depth) as pool:
        pending = deque()
        next_index = 0
        while next_index < count and len(pending) < depth:
            pending.append(pool.submit(make, next_index))
            next_index += 1
        while pending:
            result = pending.popleft().result()
            if next_index < count:
                pending.append(pool.submit(make, next_index))
                next_index += 1
            yield result


def batch_rng(seed: int, epoch: int, batch: int, stream: int) -> np.random.Generator:
    """Independent Philox stream per (run seed, stream, epoch, batch); batch -1 is the epoch's shuffle."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream), int(epoch), int(batch) + 1])))


def batch_slices(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    return [order[i:i + batch_size] for i in range(0, order.shape[0], batch_size)]


def flip_mask(rng: np.random.Generator, n: int, p: float = 0.5) -> np.ndarray:
    return rng.random(n) < p
