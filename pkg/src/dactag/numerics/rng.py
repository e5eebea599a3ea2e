"""Seeded random streams.

The generator is PCG64 (O'Neill's permuted congruential generator, 128-bit
state, 64-bit output) driven through ``random_raw`` so only the bit stream
is relied on, never numpy's distribution code. Doubles take the top 53 bits.
"""
from __future__ import annotations

import numpy as np

_INV_2_53 = 1.0 / 9007199254740992.0


class Rng:
    algorithm = "pcg64"

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._bits = np.random.PCG64(self.seed)

    def raw(self, n: int) -> np.ndarray:
        return np.asarray(self._bits.random_raw(int(n)), dtype=np.uint64).reshape(-1)

    def random(self, shape=()) -> np.ndarray:
        size = int(np.prod(shape)) if shape != () else 1
        u = (self.raw(size) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return u.reshape(shape) if shape != () else u[0]

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return low + (high - low) * self.random(shape)

    def integers(self, high: int, size: int) -> np.ndarray:
        return np.minimum((self.random((size,)) * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.raw(n), kind="stable")

    def derive(self, *keys: int) -> "Rng":
        """Independent child stream, a pure function of (seed, keys)."""
        seq = np.random.SeedSequence([self.seed, *[int(k) for k in keys]])
        return Rng(int(seq.generate_state(1, np.uint64)[0]))
