"""Counter-based random streams and block-parallel execution.

Every stream is a Philox generator keyed by (seed, purpose, index). Path work is
cut into fixed-size blocks so that the draws a path sees depend only on the
block layout, never on how many workers run the blocks.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from quadhedge.app.core.errors import InputError

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def stable_hash(purpose: str) -> int:
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    if seed < 0:
        raise InputError("seed must be a non-negative integer", field="seed")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(stable_hash(purpose), int(index)))
    return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True)
class PathBlock:
    index: int
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start


def path_blocks(n_paths: int, block_size: int) -> list[PathBlock]:
    if n_paths < 1:
        raise InputError("n_paths must be at least 1", field="n_paths")
    block_size = max(1, int(block_size))
    return [
        PathBlock(index=i, start=start, stop=min(start + block_size, n_paths))
        for i, start in enumerate(range(0, n_paths, block_size))
    ]


def run_ordered(fn: Callable[[T], R], items: Sequence[T] | Iterable[T], workers: int) -> list[R]:
    """Map fn over items on a thread pool; results come back in item order."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
