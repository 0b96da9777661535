"""Portable deterministic random number generation.

Training runs must reproduce bit-for-bit across platforms, so shuffling,
parameter init and word dropout all draw from this generator rather than
``random`` or numpy's RNG (whose stream identities are not part of our
checkpoint contract).  The algorithm is xoshiro256** seeded through
splitmix64, both defined over 64-bit unsigned arithmetic.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1

GENERATOR_NAME = "splitmix64+xoshiro256**"


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** stream seeded via splitmix64 expansion of a 64-bit seed."""

    def __init__(self, seed: int):
        state = seed & _MASK64
        s = []
        for _ in range(4):
            state = (state + 0x9E3779B97F4A7C15) & _MASK64
            z = state
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
            s.append(z ^ (z >> 31))
        self._s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection on a power-of-two mask."""
        if n <= 0:
            raise ValueError("n must be positive")
        mask = (1 << (n - 1).bit_length()) - 1 if n > 1 else 0
        while True:
            r = self.next_u64() & mask
            if r < n:
                return r

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def derive(self, salt: int) -> "Rng":
        """Independent child stream; used to give each epoch its own shuffle."""
        return Rng(self.next_u64() ^ (salt & _MASK64))
