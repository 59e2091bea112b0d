"""Counter-based random number streams.

Every stochastic routine in the package draws from a Philox counter-based
generator keyed by ``(seed, stream_id)``.  Philox streams with distinct keys
are statistically independent, cheap to create, and reproducible regardless
of how work is split across workers: stream ``k`` always yields the same
numbers for a given seed, so parallel path generation with stream-ordered
reduction is bit-reproducible.
"""

from __future__ import annotations

import numpy as np

__all__ = ["mix64", "stream", "normals"]

_MASK64 = (1 << 64) - 1


def mix64(*ids: int) -> int:
    """Fold a tuple of integers into one well-mixed 64-bit word.

    splitmix64 finalizer applied cumulatively; used to derive sub-stream
    keys from structured ids such as ``(replication, slot)``.
    """
    h = 0x9E3779B97F4A7C15
    for v in ids:
        h = (h + (int(v) & _MASK64)) & _MASK64
        h ^= h >> 30
        h = (h * 0xBF58476D1CE4E5B9) & _MASK64
        h ^= h >> 27
        h = (h * 0x94D049BB133111EB) & _MASK64
        h ^= h >> 31
    return h


def stream(seed: int, *stream_ids: int) -> np.random.Generator:
    """Independent generator for ``(seed, stream_ids...)``.

    The seed occupies the first Philox key word, the mixed stream id the
    second, so distinct ids can never collide across seeds.
    """
    key = np.array([int(seed) & _MASK64, mix64(*stream_ids)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def normals(seed: int, stream_ids: tuple[int, ...], shape) -> np.ndarray:
    """Standard normal draws from the ``(seed, stream_ids)`` stream."""
    return stream(seed, *stream_ids).standard_normal(shape)
