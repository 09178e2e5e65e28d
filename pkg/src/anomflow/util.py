"""Small shared helpers: deterministic seed derivation and digests."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*keys: int) -> int:
    """Mix integer keys into a new 32-bit seed.

    Used to give every independent random consumer (tree index, fold,
    grid cell, ...) its own stream derived from one user-facing seed, so
    results do not depend on scheduling order.
    """
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
