"""Deterministic RNG seed derivation.

Every random draw in the package flows from a single user-visible base seed
through named streams, so any run is reproducible bit-for-bit and independent
streams never alias (channel vs. noise vs. payload bits vs. training batches
vs. MAC episodes).
"""

from __future__ import annotations

import hashlib

# one spot to see every stream label in use
STREAM_BITS = "bits"
STREAM_FILLER = "filler"
STREAM_CHANNEL = "channel"
STREAM_NOISE = "noise"
STREAM_TRAIN = "train"
STREAM_MAC = "mac"
STREAM_MAC_EVAL = "mac-eval"


def seed_derive(seed_base: int, stream_label: str, index: int) -> int:
    """Collision-resistant 64-bit seed from (base, label, index)."""
    msg = f"{int(seed_base)}|{stream_label}|{int(index)}".encode("utf-8")
    digest = hashlib.sha256(msg).digest()
    return int.from_bytes(digest[:8], "little")


def tti_seed(seed_base: int, stream_label: str, point_index: int, tti_index: int) -> int:
    """Per-TTI stream seed, paired across schemes at a given sweep point.

    The index folds in the sweep point but NOT the scheme, so every scheme
    at a given (point, tti) sees identical channel / noise / payload draws.
    """
    if not 0 <= tti_index < 100_000:
        raise ValueError("tti index out of range")
    return seed_derive(seed_base, stream_label, point_index * 100_000 + tti_index)
