"""Counter-based random streams for reproducible, parallel Monte Carlo.

Every stochastic routine in this package takes an explicit ``RandomStream``.
A stream is a value, not a stateful object: it is fully determined by a
64-bit master seed plus the path of ``substream`` indices taken from the
root.  Two streams with different paths are statistically independent, and
the generator a stream hands out is a Philox counter-based generator, so
identical (seed, path) pairs produce bit-identical draws regardless of
platform, process, or how many sibling streams were consumed in between.

The spawning rule is a splitmix64 chain over the path, which keeps stream
derivation allocation-free and order-independent: ``root.substream(7)`` is
the same stream whether or not ``root.substream(3)`` was ever touched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _splitmix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class RandomStream:
    """Immutable handle on one branch of a counter-based random tree."""

    seed: int
    key: int

    @classmethod
    def from_seed(cls, seed: int) -> "RandomStream":
        seed = int(seed) & _MASK64
        return cls(seed=seed, key=_splitmix64(seed))

    def substream(self, index: int) -> "RandomStream":
        """Child stream for a nonnegative index (trial number, column, ...)."""
        if index < 0:
            raise ValueError(f"substream index must be >= 0, got {index}")
        mixed = _splitmix64(self.key ^ (((index + 1) * _GOLDEN) & _MASK64))
        return RandomStream(seed=self.seed, key=mixed)

    def generator(self) -> np.random.Generator:
        """Fresh Philox generator keyed by (seed, path key), counter at zero."""
        return np.random.Generator(np.random.Philox(key=(self.seed << 64) | self.key))
