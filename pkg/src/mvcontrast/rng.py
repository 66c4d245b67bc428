"""Seeded pseudo-randomness for every stochastic choice in the package.

The generator is xoshiro256** (Blackman/Vigna reference constants), seeded
through splitmix64. Child streams are derived from a master seed plus a
path of string/int components, so each consumer (splits, epoch shuffles,
per-batch sampling, synthetic instance parameters, ...) owns an independent,
replayable stream. All arithmetic is unsigned 64-bit, implemented with
Python ints masked to 64 bits, so streams are identical on every platform.

Constants:
  splitmix64 increment  0x9E3779B97F4A7C15
  splitmix64 mixers     0xBF58476D1CE4E5B9, 0x94D049BB133111EB
  string hashing        FNV-1a 64 (offset 0xCBF29CE484222325, prime 0x100000001B3)
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _fnv1a(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


def derive_seed(master: int, *path: int | str) -> int:
    """Derive a child seed from a master seed and a stream path.

    Components may be ints or strings; order matters. Different paths give
    statistically independent streams.
    """
    state = _splitmix64(master & _MASK)
    for part in path:
        if isinstance(part, str):
            part = _fnv1a(part.encode("utf-8"))
        elif not isinstance(part, int):
            raise TypeError(f"stream path components must be int or str, got {type(part)!r}")
        state = _splitmix64(state ^ (part & _MASK))
    return state


class Rng:
    """xoshiro256** stream."""

    __slots__ = ("_s0", "_s1", "_s2", "_s3")

    def __init__(self, seed: int):
        s = seed & _MASK
        # splitmix64 seeding per the reference implementation
        s = (s + 0x9E3779B97F4A7C15) & _MASK
        self._s0 = _mix(s)
        s = (s + 0x9E3779B97F4A7C15) & _MASK
        self._s1 = _mix(s)
        s = (s + 0x9E3779B97F4A7C15) & _MASK
        self._s2 = _mix(s)
        s = (s + 0x9E3779B97F4A7C15) & _MASK
        self._s3 = _mix(s)

    def u64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        x = (s1 * 5) & _MASK
        result = (((x << 7) | (x >> 57)) & _MASK) * 9 & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.u64() >> 11) * 2.0**-53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def randint(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError(f"randint needs n >= 1, got {n}")
        limit = _MASK + 1 - ((_MASK + 1) % n)
        while True:
            x = self.u64()
            if x < limit:
                return x % n

    def choice(self, seq):
        if not seq:
            raise ValueError("choice from empty sequence")
        return seq[self.randint(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices drawn from range(n), in draw order."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        idx = list(range(n))
        for i in range(k):
            j = i + self.randint(n - i)
            idx[i], idx[j] = idx[j], idx[i]
        return idx[:k]

    def uniforms(self, count: int) -> list[float]:
        return [self.uniform() for _ in range(count)]


def _mix(s: int) -> int:
    z = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)
