"""Deterministic counter-based random streams.

Neighborhood sampling must give bit-identical results for a given
(seed, layer, node) coordinate no matter how work is batched or scheduled
across workers. Instead of stateful generators we hash stream coordinates
with the splitmix64 finalizer and map the result to [0, 1); every coordinate
tuple is one independent draw. All arithmetic is uint64 with wraparound.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Domain tags keep unrelated streams (walks, fanout draws, shuffles, ...)
# from ever sharing coordinates.
WALK = 1
FIRST_ORDER = 2
INIT = 3
SHUFFLE = 4
SPLIT = 5
EVAL = 6
STEP = 7
USER_INIT = 8
EXPORT = 9


def _finalize(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _as_u64(x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return np.uint64(int(x) & 0xFFFFFFFFFFFFFFFF)
    arr = np.asarray(x)
    if arr.dtype == np.uint64:
        return arr
    return arr.astype(np.int64, copy=False).astype(np.uint64)


def hash_u64(*fields) -> np.ndarray:
    """Fold integer fields (scalars or broadcastable arrays) into uint64 hashes."""
    arrays = np.broadcast_arrays(*[np.atleast_1d(_as_u64(f)) for f in fields])
    h = np.full(arrays[0].shape, _GOLDEN, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for a in arrays:
            h = _finalize(h + _GOLDEN + a)
    return h


def uniform(*fields) -> np.ndarray:
    """Uniform float64 draws in [0, 1), one per broadcast coordinate."""
    return (hash_u64(*fields) >> np.uint64(11)) * (2.0 ** -53)


def randint(bound, *fields) -> np.ndarray:
    """Integer draws in [0, bound); ``bound`` may be an array, must be > 0."""
    b = np.asarray(bound, dtype=np.int64)
    return np.minimum((uniform(*fields) * b).astype(np.int64), b - 1)


def derive_seed(*fields) -> int:
    """A scalar seed derived from integer fields; feeds numpy Generators."""
    return int(hash_u64(*[np.asarray(f) for f in fields]).ravel()[0])
