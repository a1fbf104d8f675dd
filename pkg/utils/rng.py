from typing import Tuple

import numpy as np

# Entity tags keep the streams of different consumers of one replica apart
ENTITY_OFFSETS = 1
ENTITY_TYPES = 2
ENTITY_TREE = 3
ENTITY_GAUSSIAN = 4
ENTITY_PAST = 5


class ReplicaRNG:
    """Counter-based random stream addressed by (master seed, key path)

    Parameters:
    -----------
    seed: master seed of the run
    key: tuple of nonnegative integers, e.g. (replica, entity)

    The stream only depends on the seed and the key, never on which thread draws from it,
    so replica results are independent of the worker count.
    """
    def __init__(self, seed: int, key: Tuple[int, ...] = ()):
        if seed is None:
            raise ValueError("a seed is required for every stochastic computation")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.Philox(self._seq))

    def fork(self, *key: int) -> "ReplicaRNG":
        """Independent child stream with the key path extended"""
        return ReplicaRNG(self.seed, self.key + tuple(key))

    def hash_key(self) -> np.uint64:
        """64-bit key for counter-based hashing inside numba kernels"""
        return self._seq.generate_state(1, dtype=np.uint64)[0]

    def uniform_open(self, size=None) -> np.ndarray:
        """Uniform variates on (0, 1]"""
        return 1.0 - self.generator.random(size)

    def normal(self, size=None) -> np.ndarray:
        return self.generator.standard_normal(size)

    def signs(self, size) -> np.ndarray:
        """Fair +-1 draws as int8"""
        return (2 * self.generator.integers(0, 2, size=size, dtype=np.int8) - 1).astype(np.int8)

    def exponential(self, size=None) -> np.ndarray:
        return self.generator.exponential(1.0, size)

    def poisson(self, lam) -> np.ndarray:
        return self.generator.poisson(lam)

    def uniform(self, low, high, size=None) -> np.ndarray:
        return self.generator.uniform(low, high, size)
