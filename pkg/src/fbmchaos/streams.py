"""Counter-based random streams keyed by (seed, sample_index)."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DomainError

CHUNK = 1024
_U64 = 2 ** 64


def _check_u64(x: int, name: str) -> int:
    x = int(x)
    if not (0 <= x < _U64):
        raise DomainError(f"{name} must be an unsigned 64-bit integer, got {x}")
    return x


def stream_generator(seed: int, index: int) -> np.random.Generator:
    """Philox generator whose key is the pair (seed, index)."""
    key = np.array([_check_u64(seed, "seed"), _check_u64(index, "sample_index")], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def standard_normals(seed: int, indices, size: int) -> np.ndarray:
    """Rows of N(0,1) draws, one row per sample index."""
    indices = np.asarray(indices, dtype=np.int64).ravel()
    out = np.empty((indices.size, size))
    for r, idx in enumerate(indices):
        out[r] = stream_generator(seed, int(idx)).standard_normal(size)
    return out


def chunk_bounds(n_items: int, chunk: int = CHUNK):
    return [(a, min(a + chunk, n_items)) for a in range(0, n_items, chunk)]


def map_chunks(fn, n_items: int, workers: int = 1, chunk: int = CHUNK) -> list:
    """Apply ``fn(start, stop)`` over fixed-size chunks, results in chunk order.

    Chunk boundaries do not depend on ``workers``, so every chunk performs the
    same arithmetic however the work is scheduled.
    """
    bounds = chunk_bounds(n_items, chunk)
    if workers is None or workers <= 1 or len(bounds) <= 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=int(workers)) as pool:
        return list(pool.map(lambda ab: fn(*ab), bounds))
