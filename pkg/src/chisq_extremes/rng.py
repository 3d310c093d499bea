"""Counter-based random streams.

Replicates are grouped into fixed-size blocks. Every block owns a Philox
generator keyed by ``(seed, stream, block)``, so a block's draws do not depend
on which worker processes it or in which order. Results are always reassembled
in block order, which makes every estimator independent of the thread count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "CHISQ_EXTREMES_THREADS"


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV)
    if not value:
        return 1
    try:
        threads = int(value)
    except ValueError:
        return 1
    return max(threads, 1)


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def block_ranges(n_rep: int, block_size: int):
    """Yield ``(block_index, start, stop)`` covering ``range(n_rep)``."""
    for b, start in enumerate(range(0, n_rep, block_size)):
        yield b, start, min(start + block_size, n_rep)


def map_blocks(func, n_rep: int, block_size: int, threads: int | None = None):
    """Apply ``func(block, start, stop)`` to every block; results in block order."""
    blocks = list(block_ranges(n_rep, block_size))
    threads = default_threads() if threads is None else max(int(threads), 1)
    if threads == 1 or len(blocks) == 1:
        return [func(*blk) for blk in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda blk: func(*blk), blocks))
