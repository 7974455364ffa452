"""Deterministic per-replica seeds."""

from __future__ import annotations

import hashlib


def derive_seed(master: int, name: str, index: int) -> int:
    """64-bit seed from (master seed, experiment name, replica index)."""
    digest = hashlib.blake2b(f"{master}:{name}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def replica_seeds(master: int, name: str, reps: int) -> list[int]:
    return [derive_seed(master, name, i) for i in range(reps)]
