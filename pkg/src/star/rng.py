"""Deterministic child-stream seeding.

Streams are derived from (seed, labels...) via md5, so the same component
gets the same stream regardless of what other components run around it.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_label(label: str | int) -> int:
    if isinstance(label, int):
        return label & 0xFFFFFFFF
    digest = hashlib.md5(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def child_rng(seed: int, *labels: str | int) -> np.random.Generator:
    keys = [seed & 0xFFFFFFFF] + [stable_label(x) for x in labels]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(keys)))
