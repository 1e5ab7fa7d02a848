"""Counter-based deterministic random streams.

The generator is SplitMix64 evaluated at an explicit counter: value ``k`` of
the stream keyed by ``key`` is ``mix64(key + (k + 1) * 0x9E3779B97F4A7C15)``.
Because every value is a pure function of ``(key, k)``, streams are
reproducible bit for bit and independent of call order. Normals use the
Box-Muller transform on consecutive value pairs.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .kernels import _INV_2_53, GOLDEN_GAMMA, MASK64


def mix64(z: int) -> int:
    """SplitMix64 finaliser on a Python int (wraps to 64 bits)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(*parts: int) -> int:
    """Fold integers into one 64-bit seed.

    Order matters, so ``derive_seed(base, refresh, param)`` gives distinct
    streams per refresh and per parameter.
    """
    h = 0x6A09E667F3BCC909
    for p in parts:
        h = mix64(h ^ ((int(p) & MASK64) + GOLDEN_GAMMA))
    return h


class Rng:
    """A seeded counter-based stream.

    The stream position only moves forward; the owner is the sole mutator.
    """

    algorithm = "splitmix64-counter/box-muller"

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self._key = mix64(self.seed)
        self._counter = 0

    @property
    def counter(self) -> int:
        return self._counter

    def standard_normal(self, n: int) -> np.ndarray:
        # keep the counter pair-aligned so Box-Muller pairs never straddle calls
        out = kernels.standard_normals(self._key, self._counter, n)
        self._counter += n + (n % 2)
        return out

    def normal(self, shape, variance: float = 1.0) -> np.ndarray:
        shape = tuple(int(s) for s in np.atleast_1d(shape))
        size = int(np.prod(shape))
        return (np.sqrt(variance) * self.standard_normal(size)).reshape(shape)

    def uniform(self, n: int) -> np.ndarray:
        """Uniform draws in (0, 1) from the same counter stream."""
        c = np.arange(self._counter, self._counter + n, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = kernels._mix64_np(np.uint64(self._key) + (c + np.uint64(1)) * np.uint64(GOLDEN_GAMMA))
        self._counter += n + (n % 2)
        return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53

    def spawn(self, *parts: int) -> "Rng":
        return Rng(derive_seed(self.seed, *parts))
