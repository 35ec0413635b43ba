"""Reproducible random streams and chunked sample loops.

A Monte Carlo budget is cut into fixed-size chunks. Chunk ``i`` draws from a
generator seeded with ``mix64(seed ^ i)``, so the tallies do not depend on how
many workers process the chunks.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

MASK64 = (1 << 64) - 1
DEFAULT_CHUNK = 1 << 15


def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z = (z + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_seed(seed: int, index: int) -> int:
    return mix64((int(seed) & MASK64) ^ int(index))


def stream_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(stream_seed(seed, index))


def chunk_sizes(budget: int, chunk: int = DEFAULT_CHUNK) -> list[int]:
    budget = int(budget)
    full, rest = divmod(budget, chunk)
    sizes = [chunk] * full
    if rest:
        sizes.append(rest)
    return sizes


def run_chunks(fn, budget, seed, workers=1, chunk=DEFAULT_CHUNK):
    """Call ``fn(rng, size, index)`` for every chunk and return the results
    in chunk order."""
    sizes = chunk_sizes(budget, chunk)
    jobs = [(stream_rng(seed, i), n, i) for i, n in enumerate(sizes)]
    if workers is None or workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
