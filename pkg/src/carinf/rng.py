"""Counter-based random streams.

Draw ``i`` of a stream with 64-bit key ``k`` is ``mix64(k + (i + 1) * GAMMA)``,
the SplitMix64 generator of Steele, Lea and Flood (2014) read at position
``i``.  Any draw can therefore be computed directly from (key, index), which
makes replications independent of execution order and thread count.

Keys are derived by hashing a seed together with a path of integer tags, so a
replication, an attempt, a stratum or a variable each get their own stream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K

_MASK = K.MASK64
_ROOT = 0x243F6A8885A308D3

TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """SplitMix64 finalizer on Python ints."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * K.MIX1) & _MASK
    z = ((z ^ (z >> 27)) * K.MIX2) & _MASK
    return z ^ (z >> 31)


def derive_key(*words: int) -> int:
    h = _ROOT
    for w in words:
        h = mix64(((h ^ (int(w) & _MASK)) + K.GAMMA) & _MASK)
    return h


@dataclass(frozen=True)
class RngSeed:
    """A (seed, stream) pair naming one reproducible family of draws."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not (0 <= int(self.seed) <= _MASK) or not (0 <= int(self.stream) <= _MASK):
            raise ValueError("seed and stream must be unsigned 64-bit integers")

    def spawn(self, *tags: int) -> "RngSeed":
        """Child seed on a new stream; distinct tag paths give distinct streams."""
        return RngSeed(self.seed, derive_key(self.stream, *tags))

    def child(self, k: int) -> "RngSeed":
        return self.spawn(k)

    @property
    def key(self) -> int:
        return derive_key(self.seed, self.stream)

    def rng(self) -> "CounterRng":
        return CounterRng(self.key)


class CounterRng:
    """Sequential reader over one SplitMix64 stream."""

    def __init__(self, key: int, position: int = 0):
        self.key = int(key) & _MASK
        self.position = int(position)

    def raw(self, count: int) -> np.ndarray:
        out = K.splitmix_block(self.key, self.position, count)
        self.position += count
        return out

    def uniform(self, count: int) -> np.ndarray:
        """Uniforms on [0, 1) with 53 random bits."""
        return (self.raw(count) >> np.uint64(11)).astype(np.float64) * _INV_2_53

    def normal(self, count: int) -> np.ndarray:
        """Standard normals by Box-Muller, both halves of each pair used."""
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log1p(-u[:pairs]))
        ang = TWO_PI * u[pairs:]
        return np.concatenate((r * np.cos(ang), r * np.sin(ang)))[:count]

    def student_t3(self, count: int) -> np.ndarray:
        """Student t with 3 degrees of freedom, N / sqrt(chi2_3 / 3)."""
        z = self.normal(4 * count).reshape(4, count)
        chi = z[1] ** 2 + z[2] ** 2 + z[3] ** 2
        return z[0] / np.sqrt(chi / 3.0)
