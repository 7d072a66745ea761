"""Deterministic random streams.

Every random draw in the toolkit flows through a Philox4x64-10 counter-based
bit generator whose 128-bit key is the user-facing 64-bit seed zero-extended.
Philox is a fixed published algorithm, so a given seed reproduces the same
stream on every platform and in independent reimplementations (the external
bridge replays the same construction for its echo mode).
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def philox(seed: int) -> np.random.Generator:
    """Generator keyed directly by ``seed`` (no seed-sequence hashing)."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


def digest64(data: bytes) -> int:
    """64-bit content digest (BLAKE2b-8), used for latent fingerprints."""
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")
