"""Seeded random streams.

Uniform variates come from numpy's PCG64 bit generator, whose output for a
given seed is fixed across platforms. Normal variates are produced from those
uniforms with the Box-Muller transform (cosine branch only)::

    z = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)

so the normal stream depends only on the uniform stream.
"""

from __future__ import annotations

import numpy as np


class Rng:
    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed & (2**64 - 1))))

    def uniform(self, size=None, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return low + (high - low) * self._gen.random(size)

    def normal(self, size=None, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        shape = () if size is None else size
        n = int(np.prod(shape)) if shape != () else 1
        u = self._gen.random(2 * n)
        u1, u2 = u[:n], u[n:]
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        z = mean + std * z
        return z.reshape(shape) if shape != () else float(z[0])

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def child(self, key: int) -> "Rng":
        """An independent stream derived deterministically from (seed, key)."""
        ss = np.random.SeedSequence([self.seed & (2**64 - 1), int(key)])
        out = Rng.__new__(Rng)
        out.seed = int(ss.generate_state(1, dtype=np.uint64)[0])
        out._gen = np.random.Generator(np.random.PCG64(ss))
        return out
