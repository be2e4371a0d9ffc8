"""
Reproducible Randomness
Counter-based random source with seed splitting.

The stream comes from numpy's Philox4x64-10 bit generator (a counter-based
generator with a published algorithm), keyed directly by the 64-bit seed, so
equal seeds and equal call sequences give equal draws on every platform.
Child streams for parallel work are keyed by SplitMix64(seed, index).
"""
import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(value):
    """SplitMix64 finalizer on a Python int"""
    z = (value + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def split_seed(seed, index):
    return mix64((seed & _MASK) ^ mix64(index & _MASK))


class Rng:
    """Single-owner random source; never share one instance across threads"""

    def __init__(self, seed):
        self.seed = int(seed) & _MASK
        self._generator = np.random.Generator(np.random.Philox(key=self.seed))
        self.draws = 0

    def split(self, index):
        """Independent child stream for worker/frame `index`"""
        return Rng(split_seed(self.seed, index))

    def uniform(self, low=0.0, high=1.0, size=None):
        self.draws += 1
        return self._generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        self.draws += 1
        return self._generator.normal(loc, scale, size)

    def integers(self, low, high, size=None):
        """Integers in [low, high)"""
        self.draws += 1
        return self._generator.integers(low, high, size)

    def poisson(self, lam):
        self.draws += 1
        return self._generator.poisson(lam)

    def permutation(self, n):
        self.draws += 1
        return self._generator.permutation(n)

    def uint64(self, size=None):
        self.draws += 1
        return self._generator.integers(0, _MASK, size, dtype=np.uint64, endpoint=True)

    def __repr__(self):
        return f"Rng(seed={self.seed})"
