"""Seeded, splittable random streams.

Every stochastic operation in the package draws from an ``RngStream``, a
value type identified by a ``(seed, stream_id)`` pair. The pair keys a
counter-based Philox generator, so identical pairs reproduce identical
draw sequences on every platform, and distinct ``stream_id`` values give
statistically independent streams for parallel work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    # Finalizer from the splitmix64 generator; good 64-bit avalanche mixing.
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


@dataclass(frozen=True)
class RngStream:
    """Immutable handle for one reproducible random stream."""

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if not 0 <= self.stream_id <= _MASK64:
            raise ValueError("stream_id must fit in 64 unsigned bits")

    def generator(self) -> np.random.Generator:
        """Fresh generator; repeated calls restart the same sequence."""
        return np.random.Generator(np.random.Philox(key=[self.seed, self.stream_id]))

    def child(self, index: int) -> "RngStream":
        """Derive the ``index``-th substream, deterministically."""
        mixed = _splitmix64(self.stream_id ^ _splitmix64(index & _MASK64))
        return RngStream(self.seed, mixed)
