"""Named, reproducible random streams derived from one master seed.

Every stream is ``PCG64(SeedSequence([seed, crc32(name), *index]))``, so a
stream depends only on the master seed, its name and its index tuple.
External tools can rebuild any single replica from those three values.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _entropy(seed: int, name: str, index: tuple[int, ...]) -> list[int]:
    return [int(seed) & _MASK64, zlib.crc32(name.encode("utf-8")), *(int(i) & _MASK64 for i in index)]


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(_entropy(seed, name, index))))


def derive_seed(seed: int, name: str, *index: int) -> int:
    """Stable 63-bit child seed, e.g. the seed of replica ``i``."""
    ss = np.random.SeedSequence(_entropy(seed, name, index))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def replica_seed(master_seed: int, replica: int) -> int:
    return derive_seed(master_seed, "replica", replica)
