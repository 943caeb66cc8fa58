"""Deterministic, splittable random streams.

Built on numpy's Philox counter-based generator.  A stream is addressed
by (seed, path): the same seed and path always reproduce the same
values, and ``split`` derives an independent child stream per name, so
every parameter tensor can own its own stream regardless of creation
order.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _path_key(path: tuple[str, ...]) -> int:
    digest = hashlib.sha256("/".join(path).encode()).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """Seeded Philox stream, splittable by name."""

    def __init__(self, seed: int, _path: tuple[str, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._path = _path
        bitgen = np.random.Philox(key=np.array([self.seed, _path_key(_path)], dtype=np.uint64))
        self._gen = np.random.Generator(bitgen)

    def split(self, name: str) -> "Rng":
        """Independent child stream; same (seed, name) -> same stream."""
        return Rng(self.seed, self._path + (str(name),))

    def uniform(self, shape, low: float = 0.0, high: float = 1.0, dtype=np.float32) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape).astype(dtype)

    def normal(self, shape, scale: float = 1.0, dtype=np.float32) -> np.ndarray:
        return (self._gen.standard_normal(size=shape) * scale).astype(dtype)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, seq):
        return seq[int(self._gen.integers(0, len(seq)))]
