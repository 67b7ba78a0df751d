"""Per-component seed derivation from one run seed.

Each consumer draws from ``derive_seed(seed, *path)``, a 63-bit integer
obtained by hashing the path names into a ``numpy.random.SeedSequence``
spawn key. Adding a consumer never shifts the streams of the others.
"""

import hashlib

import numpy as np


def _key(name):
    return int.from_bytes(hashlib.sha256(str(name).encode("utf-8")).digest()[:4], "little")


def derive_seed(seed, *names) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(n) for n in names))
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1


def derive_rng(seed, *names) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *names))
