import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict

import numpy as np
from tqdm import tqdm

logger = logging.getLogger(__name__)

Moments = Dict[str, np.ndarray]


class KahanSum:
    """Compensated running sum of equally shaped arrays, added in call order."""

    def __init__(self):
        self._total = None
        self._carry = None

    def add(self, value: np.ndarray) -> None:
        value = np.asarray(value, dtype=float)
        if self._total is None:
            self._total = value.copy()
            self._carry = np.zeros_like(self._total)
            return
        term = value - self._carry
        updated = self._total + term
        self._carry = (updated - self._total) - term
        self._total = updated

    def add_rows(self, rows: np.ndarray) -> None:
        for row in rows:
            self.add(row)

    @property
    def total(self) -> np.ndarray:
        return self._total


def accumulate_rows(samples: Dict[str, np.ndarray]) -> Moments:
    """Row-ordered compensated sums of per-sample arrays, one entry per key."""
    sums = {}
    for key, rows in samples.items():
        acc = KahanSum()
        acc.add_rows(rows)
        sums[key] = acc.total
    return sums


def resolve_workers(workers: int) -> int:
    return workers if workers > 0 else (os.cpu_count() or 1)


class EnsembleRunner:
    """
    Runs chunked ensemble work on a thread pool and merges the partial sums in
    chunk order. Chunk boundaries depend only on the ensemble size and the chunk
    size, never on the worker count, so totals are bitwise independent of it.
    """

    def __init__(self, max_workers: int = 8, show_progress: bool = False):
        self.max_workers = resolve_workers(max_workers)
        self._show_progress = show_progress
        self._executor = ThreadPoolExecutor(max_workers=self.max_workers)

    def reduce(
        self,
        n_items: int,
        chunk_size: int,
        work: Callable[[int, int], Moments],
        label: str = "ensemble",
    ) -> Moments:
        tasks = []
        for start in range(0, n_items, chunk_size):
            stop = min(start + chunk_size, n_items)
            tasks.append(self._executor.submit(work, start, stop))

        logger.info("Running %s: %d items in %d chunks on %d workers", label, n_items, len(tasks), self.max_workers)

        totals: Dict[str, KahanSum] = {}
        with tqdm(total=len(tasks), desc=label, disable=not self._show_progress) as progress:
            for task in tasks:
                for key, value in task.result().items():
                    totals.setdefault(key, KahanSum()).add(value)
                progress.update(1)

        return {key: acc.total for key, acc in totals.items()}

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)
