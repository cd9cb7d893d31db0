"""Seed-stream derivation.

Every randomized stage draws from its own PCG64 stream derived as
``seed XOR blake2b(tag)``, so that output does not depend on worker
count or evaluation order.  The derivation is part of the on-disk
format contract: regenerating with the same seed and tag must yield
identical bytes.
"""

import hashlib

import numpy as np


def tag_hash(tag: str) -> int:
    """Stable 64-bit hash of a purpose tag (first 8 bytes of blake2b, little-endian)."""
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream_seed(seed: int, tag: str) -> int:
    """Derive the 64-bit stream seed for (seed, tag)."""
    return (int(seed) ^ tag_hash(tag)) & 0xFFFFFFFFFFFFFFFF


def stream(seed: int, tag: str) -> np.random.Generator:
    """PCG64 generator for the given base seed and purpose tag."""
    return np.random.Generator(np.random.PCG64(stream_seed(seed, tag)))
