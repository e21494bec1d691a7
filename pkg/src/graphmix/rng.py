"""Counter-based random streams.

Every random quantity in the package is a pure function of integer keys, so
results never depend on evaluation order or on how trials are split across
workers.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = (x + np.uint64(0x9E3779B97F4A7C15)) & _MASK
    x = ((x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK
    x = ((x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK
    return x ^ (x >> np.uint64(31))


def keyed_uniform(*keys) -> np.ndarray:
    """Uniform [0, 1) values keyed by a tuple of integers (arrays broadcast).

    ``keyed_uniform(seed, u, v)`` is the coin for the pair ``(u, v)``; it is the
    same no matter which other pairs are drawn or in which order.
    """
    arrays = np.broadcast_arrays(*[np.asarray(k, dtype=np.int64) for k in keys])
    with np.errstate(over="ignore"):
        h = np.full(arrays[0].shape, np.uint64(0x243F6A8885A308D3), dtype=np.uint64)
        for a in arrays:
            h = _splitmix64(h ^ a.astype(np.uint64))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def stream(seed: int, trial: int, stream_id: int = 0) -> np.random.Generator:
    """Philox generator for one (seed, trial, stream) triple.

    Draw ``k`` of a length-n block is the value for vertex ``k``, so a vertex's
    noise is fixed by (seed, trial, stream, vertex).
    """
    key = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, int(trial), int(stream_id)])
    return np.random.Generator(np.random.Philox(key=key.generate_state(2, np.uint64)))


def vertex_uniforms(seed: int, trial: int, n: int, stream_id: int = 0) -> np.ndarray:
    return stream(seed, trial, stream_id).random(n)
