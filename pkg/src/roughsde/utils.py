"""Small shared helpers: deterministic chunking and worker resolution."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["resolve_workers", "path_chunks", "run_chunked"]

CHUNK_SIZE = 512
THREADS_ENV = "ROUGH_RSDE_THREADS"


def resolve_workers(n_workers: int | None) -> int:
    """Worker count: explicit argument, else the ROUGH_RSDE_THREADS cap, else 1."""
    if n_workers is not None:
        return max(1, int(n_workers))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return 1


def path_chunks(n_paths: int, chunk_size: int = CHUNK_SIZE):
    """Fixed-size index chunks; independent of the worker count."""
    return [
        np.arange(lo, min(lo + chunk_size, n_paths))
        for lo in range(0, n_paths, chunk_size)
    ]


def run_chunked(fn, chunks, workers: int):
    """Apply fn to every chunk, preserving chunk order in the result list."""
    if workers <= 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))
