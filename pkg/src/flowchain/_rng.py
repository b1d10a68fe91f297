"""Deterministic, splittable random streams.

Every stream is a Philox (counter-based) generator keyed through a
SeedSequence spawn key, so streams for distinct (seed, tag, index, ...)
tuples are statistically independent and reproducible on any platform
and for any worker count.

Two stream families are used:

* per-path streams, ``pathwise_stream(seed, tag, path_id, ...)``, for the
  single-path simulation ops;
* per-chunk streams, ``chunk_stream(seed, tag, chunk_index)``, for the
  vectorised Monte Carlo kernels, which process paths in fixed-size
  chunks (``CHUNK`` paths) regardless of worker count.
"""

from __future__ import annotations

import numpy as np

# Fixed chunk size for vectorised Monte Carlo.  Must never depend on the
# worker count, otherwise results would not be scheduling-independent.
CHUNK = 4096

# Stream tags keep the noise of different subsystems disjoint.
TAG_PATH_LINEAR = 1
TAG_PATH_SDE = 2
TAG_PATH_BUMP = 3
TAG_MC_LINEAR = 11
TAG_MC_SDE = 12
TAG_MC_BUMP = 13
TAG_GRR = 21
TAG_VALIDATE = 31


def _words(value: int) -> tuple[int, ...]:
    """Encode an arbitrary int as three uint32 words (zigzag for sign)."""
    u = (value << 1) if value >= 0 else (-(value << 1) - 1)
    return (u & 0xFFFFFFFF, (u >> 32) & 0xFFFFFFFF, (u >> 64) & 0xFFFFFFFF)


def _sequence(seed: int, key: tuple[int, ...]) -> np.random.SeedSequence:
    spawn: list[int] = []
    for part in key:
        spawn.extend(_words(int(part)))
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(spawn))


def stream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the given (seed, *key) address."""
    return np.random.Generator(np.random.Philox(_sequence(seed, key)))


def pathwise_stream(seed: int, tag: int, path_id: int, *extra: int) -> np.random.Generator:
    return stream(seed, tag, path_id, *extra)


def chunk_stream(seed: int, tag: int, chunk_index: int) -> np.random.Generator:
    return stream(seed, tag, chunk_index)


def chunk_ranges(path_count: int) -> list[tuple[int, int, int]]:
    """Fixed partition of [0, path_count) into (chunk_index, start, stop)."""
    out = []
    start = 0
    idx = 0
    while start < path_count:
        stop = min(start + CHUNK, path_count)
        out.append((idx, start, stop))
        start = stop
        idx += 1
    return out
