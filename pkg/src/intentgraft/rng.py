"""Deterministic randomness and hashing primitives.

Every stochastic operation in the pipeline draws from an explicitly passed
``numpy.random.Generator``. Streams are derived from a 64-bit user seed plus a
purpose string, so independent pipeline stages never share state and reruns
with the same seed reproduce byte-identical artifacts on any platform.

Hash contract (fixed; serialized model artifacts depend on it):
``hash64(s)`` is the little-endian unsigned integer of the 8-byte BLAKE2b
digest of the UTF-8 encoding of ``s``.
"""

from __future__ import annotations

import hashlib

import numpy as np


def hash64(s: str) -> int:
    """Platform-independent 64-bit hash of a string."""
    digest = hashlib.blake2b(s.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(seed: int, purpose: str) -> np.random.Generator:
    """Derive an independent PCG64 generator for one pipeline stage.

    The (seed, purpose) pair fully determines the stream; distinct purposes
    give statistically independent streams for the same seed.
    """
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, hash64(purpose)]))
