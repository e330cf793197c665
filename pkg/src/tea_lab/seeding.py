"""Seed-tree derivation and RNG construction.

Every random stream in the package comes from :func:`rng`, which wraps a
Philox counter-based bit generator (normals drawn by numpy's ziggurat). Child
seeds depend only on the parent seed, a purpose string and an index, so the
order in which jobs are scheduled never changes what they draw.
"""

from __future__ import annotations

import hashlib

import numpy as np


def child_seed(parent: int, purpose: str, index: int = 0) -> int:
    digest = hashlib.sha256(f"{int(parent)}/{purpose}/{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))
