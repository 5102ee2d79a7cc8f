"""Deterministic RNG derivation.

Every source of randomness in the package is a `random.Random` derived from
an explicit integer seed plus a label path, so identical seeds reproduce
identical runs byte for byte, independent of platform hash randomization.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(seed, *labels) -> int:
    """Hash (seed, labels...) into a 64-bit child seed."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for label in labels:
        h.update(b"|")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "little")


def derive_rng(seed, *labels) -> random.Random:
    """A fresh Random stream for the given label path."""
    return random.Random(derive_seed(seed, *labels))
