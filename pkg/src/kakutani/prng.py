"""Reproducible random streams.

Each stream is a numpy ``Philox`` generator whose 128-bit key is the BLAKE2b
digest of the seed and a stream name.  Philox is counter based, so the values
are the same on every platform and independent streams never overlap.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(seed: int, name: str) -> np.ndarray:
    digest = hashlib.blake2b(f"{int(seed)}:{name}".encode(), digest_size=16).digest()
    return np.frombuffer(digest, dtype="<u8").copy()


def rng(seed: int, name: str = "") -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, name)))
