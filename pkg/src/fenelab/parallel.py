"""Deterministic thread-pool helpers.

Work is always partitioned into chunks of a fixed size that does not depend
on the number of workers, and results are reassembled in chunk order, so the
output is bitwise identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np
from numpy.typing import NDArray

T = TypeVar("T")

__all__ = ["WorkerPool"]


class WorkerPool:
    """A thread pool with deterministic chunked map.

    Parameters
    ----------
    workers : int
        Number of threads (``1`` runs inline).
    chunk : int
        Fixed chunk length used by :meth:`map_rows`.
    """

    def __init__(self, workers: int = 1, chunk: int = 64) -> None:
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = int(workers)
        self.chunk = int(chunk)
        self._executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def map(self, fn: Callable[[T], object], items: Sequence[T]) -> list:
        """Apply ``fn`` to each item; results are returned in input order."""
        if self._executor is None:
            return [fn(item) for item in items]
        return list(self._executor.map(fn, items))

    def map_rows(self, fn: Callable[[NDArray], NDArray], array: NDArray) -> NDArray:
        """Apply a row-wise function to ``array`` (first axis) chunk by chunk."""
        n = array.shape[0]
        bounds = [(i, min(i + self.chunk, n)) for i in range(0, n, self.chunk)]
        parts = self.map(lambda b: fn(array[b[0]:b[1]]), bounds)
        return np.concatenate(parts, axis=0)

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown()
            self._executor = None

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
