"""Reproducible per-path random streams.

Paths are grouped in fixed blocks of ``BLOCK`` paths. Block ``b`` of stream
``s`` under master seed ``seed`` draws from
``SeedSequence(seed, spawn_key=(s, b))``, and always draws a full block. So
the variates of path ``k`` depend only on ``(seed, s, k)`` and never on the
total number of paths, and blocks can be generated in any order or in
parallel. Blocks are concatenated in index order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 1024


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("TONTINE_THREADS", "1")))
    except ValueError:
        return 1


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) % 2**64, spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.PCG64(ss))


def _draw(seed, stream, n_paths, shape, kind, start=0):
    first = start // BLOCK
    n_blocks = -(-n_paths // BLOCK)

    def one(b):
        g = block_generator(seed, stream, b)
        if kind == "normal":
            return g.standard_normal((BLOCK, *shape))
        return g.random((BLOCK, *shape))

    workers = n_workers()
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(workers) as ex:
            blocks = list(ex.map(one, range(first, n_blocks)))
    else:
        blocks = [one(b) for b in range(first, n_blocks)]
    return np.concatenate(blocks, axis=0)[start - first * BLOCK:n_paths - first * BLOCK]


def path_normals(seed: int, n_paths: int, n_steps: int, stream: int = 0, start: int = 0) -> np.ndarray:
    """Standard normals for paths ``start..n_paths-1``, shape ``(n_paths - start, n_steps)``."""
    return _draw(seed, stream, n_paths, (n_steps,), "normal", start)


def path_uniforms(seed: int, n_paths: int, shape: tuple, stream: int = 1) -> np.ndarray:
    """Uniforms on [0, 1) of shape ``(n_paths, *shape)``."""
    return _draw(seed, stream, n_paths, tuple(shape), "uniform")
