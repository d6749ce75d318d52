"""Labeled seed derivation so every sub-experiment owns an independent stream."""

from __future__ import annotations

import hashlib
import random

MASK64 = (1 << 64) - 1


def derive_seed(*labels) -> int:
    """Hash arbitrary labels (ints, strings) into a 63-bit seed."""
    h = hashlib.sha256("\x1f".join(str(x) for x in labels).encode()).digest()
    return int.from_bytes(h[:8], "big") >> 1


def derive_rng(*labels) -> random.Random:
    return random.Random(derive_seed(*labels))


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)
