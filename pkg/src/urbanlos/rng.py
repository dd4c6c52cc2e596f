"""Seed derivation for reproducible, order-independent random streams.

Every entity (a city, the placement of its ABS/UEs, ...) gets its own
generator whose seed is a pure function of the master seed and the entity's
index path.  The mixer is the SplitMix64 finalizer applied to
``seed + golden_gamma * (index + 1)``, so

    derive_seed(master, i)            -> stream for city i
    derive_seed(derive_seed(master, i), 0)   -> city layout stream
    derive_seed(derive_seed(master, i), 1)   -> ABS/UE placement stream

Streams are PCG64 generators seeded with the mixed 64-bit value.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# sub-stream indices inside one city
CITY_STREAM = 0
PLACEMENT_STREAM = 1
HIGHWAY_UE_STREAM = 2


def mix64(z: int) -> int:
    """SplitMix64 finalizer (full avalanche on 64 bits)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *path: int) -> int:
    """Fold an index path into ``seed``; each step is one mixer round."""
    s = int(seed) & MASK64
    for idx in path:
        s = mix64(s + GOLDEN_GAMMA * (int(idx) + 1))
    return s


def generator(seed: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *path)))
