"""Deterministic seed derivation.

Every random draw in the package flows from ``derive_rng(master, stream, *index)``
so that corpora are identical regardless of worker count or call order.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream_key(stream: str) -> int:
    return zlib.crc32(stream.encode("utf-8"))


def derive_seed(master_seed: int, stream: str, *index: int) -> np.random.SeedSequence:
    entropy = [int(master_seed) & 0xFFFFFFFF, stream_key(stream), *(int(i) for i in index)]
    return np.random.SeedSequence(entropy)


def derive_rng(master_seed: int, stream: str, *index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, stream, *index))


def child_seed(rng: np.random.Generator) -> int:
    """Draw a 63-bit integer seed from ``rng`` (used to log replayable stage seeds)."""
    return int(rng.integers(0, 2**63 - 1))
