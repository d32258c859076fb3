"""Reproducible random number generation.

Every random draw in the package comes from SplitMix64 (Steele, Lea &
Flood 2014): a 64-bit counter advanced by the golden-ratio constant and
finalized with two xor-multiply rounds.  The generator is named here so that
any implementation of the same streams, in any language, reproduces our runs
bit for bit.  Uniform doubles take the top 53 bits of an output word; normal
deviates use the Box-Muller transform on uniform pairs.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(a: int, b: int = 0) -> int:
    """Finalize ``a + GOLDEN*(b+1)`` through the SplitMix64 mixer.

    Used to derive independent child seeds (per training step, per sentence)
    from one root seed.
    """
    z = (a + _GOLDEN * (b + 1)) & _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """SplitMix64 stream with vectorized block draws."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def _block(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs, advancing the stream by ``n``."""
        counters = (
            np.uint64(self._state)
            + np.uint64(_GOLDEN) * np.arange(1, n + 1, dtype=np.uint64)
        )
        self._state = (self._state + _GOLDEN * n) & _MASK
        z = counters
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def next_u64(self) -> int:
        return int(self._block(1)[0])

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform float64 in [0, 1), one per element of ``shape``."""
        n = int(np.prod(shape)) if shape else 1
        u = (self._block(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        return u.reshape(shape) if shape else u.reshape(())

    def normal(self, shape=(), sigma: float = 1.0) -> np.ndarray:
        """Standard normal deviates scaled by ``sigma`` (Box-Muller)."""
        n = int(np.prod(shape)) if shape else 1
        pairs = (n + 1) // 2
        raw = self._block(2 * pairs)
        # u1 in (0, 1] so log() is finite; u2 in [0, 1)
        u1 = ((raw[:pairs] >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n] * sigma
        return z.reshape(shape) if shape else z.reshape(())

    def randrange(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        limit = (_MASK + 1) - ((_MASK + 1) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, population: int, k: int) -> list[int]:
        """k distinct indices drawn without replacement from range(population)."""
        if k > population:
            raise ValueError(f"cannot sample {k} from population of {population}")
        idx = list(range(population))
        self.shuffle(idx)
        return idx[:k]
