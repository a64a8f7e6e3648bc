"""Deterministic seed derivation so every stage is reproducible from one root seed."""
from __future__ import annotations

import hashlib
import random


def derive_seed(root: int, *parts: object) -> int:
    """Stable 64-bit sub-seed for a labelled stage under a root seed.

    Uses blake2b on the label path rather than hash(), which is salted
    per process and would break cross-run determinism.
    """
    key = ":".join([str(root), *(str(p) for p in parts)])
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def rng_for(root: int, *parts: object) -> random.Random:
    """Fresh RNG for a labelled stage; independent of draw order elsewhere."""
    return random.Random(derive_seed(root, *parts))
