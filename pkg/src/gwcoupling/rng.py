"""Splittable, deterministic random streams keyed by vertex address.

Couplings consume one independent bundle of randomness per vertex of the
ambient tree.  ``RngStream`` realizes that: a stream is identified by a
64-bit seed plus a path of split keys, draws are counter-mode BLAKE2b, and
``child(...)`` derives the statistically independent substream for a key.
Identical (seed, path, counter) always reproduces the same draws on any
platform, which is what makes every sampled record replayable from its
logged seed.
"""

from __future__ import annotations

import hashlib
import struct


class RngStream:
    __slots__ = ("_key", "seed", "path", "counter")

    def __init__(self, seed: int, _key: bytes | None = None, path: tuple = ()):
        self.seed = seed & 0xFFFFFFFFFFFFFFFF
        self.path = path
        self._key = _key if _key is not None else hashlib.blake2b(
            struct.pack("<Q", self.seed), digest_size=32).digest()
        self.counter = 0

    def child(self, *parts) -> "RngStream":
        """Independent substream for a split key (ints, strings, label tuples)."""
        h = hashlib.blake2b(self._key, digest_size=32)
        for part in _flatten(parts):
            if isinstance(part, int):
                h.update(b"i" + struct.pack("<q", part))
            elif isinstance(part, str):
                h.update(b"s" + part.encode() + b"\x00")
            else:
                raise TypeError(f"cannot split on {part!r}")
        return RngStream(self.seed, _key=h.digest(), path=self.path + parts)

    def u64(self) -> int:
        out = hashlib.blake2b(
            self._key + struct.pack("<Q", self.counter), digest_size=8).digest()
        self.counter += 1
        return struct.unpack("<Q", out)[0]

    def uniform(self) -> float:
        """Uniform in [0, 1) with 53 random bits."""
        return (self.u64() >> 11) * (2.0**-53)

    def randbelow(self, n: int) -> int:
        """Exactly uniform on {0..n-1} via rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.u64()
            if x < limit:
                return x % n

    def choice(self, seq):
        return seq[self.randbelow(len(seq))]

    def permutation(self, n: int) -> tuple[int, ...]:
        """Uniform permutation of (1..n)."""
        items = list(range(1, n + 1))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
        return tuple(items)

    def bernoulli(self, p_float: float) -> bool:
        return self.uniform() < p_float


def _flatten(parts):
    for part in parts:
        if isinstance(part, tuple):
            yield len(part)
            yield from _flatten(part)
        else:
            yield part
