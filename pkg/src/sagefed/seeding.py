"""Deterministic seed derivation for nested experiment components.

Every source of randomness in a run is a child stream derived from the
root seed plus a string/int path, so results do not depend on execution
order and re-runs are bit-for-bit reproducible.
"""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *path: int | str) -> int:
    """Stable 64-bit child seed for (root, *path).

    Uses SHA-256 rather than hash() so the value is identical across
    processes and platforms.
    """
    h = hashlib.sha256()
    h.update(str(int(root)).encode())
    for part in path:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(root: int, *path: int | str) -> np.random.Generator:
    """Generator seeded by the derived child seed."""
    return np.random.default_rng(derive_seed(root, *path))
