"""Deterministic random-number streams.

Every stochastic component in the package draws from a Philox4x64
counter-based bit generator whose 128-bit key is SHA-256("<seed>:<label>")
truncated to 16 bytes. Philox streams are stable across platforms and numpy
versions for a fixed key, so any seed + label pair reproduces byte-identical
results everywhere, and labeled substreams (e.g. one per bootstrap iteration
or simulation replicate) are independent regardless of execution order or
thread count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, label: str) -> int:
    """128-bit Philox key for the substream `label` of master `seed`."""
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def substream(seed: int, label: str) -> np.random.Generator:
    """Independent generator for the given master seed and substream label."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, label)))
