"""Deterministic seed derivation.

Every random quantity is drawn from a generator keyed by a master seed plus a
tuple of integer keys (cell id, replication index, stage). Streams for
different keys are statistically independent and do not depend on how work
is scheduled across workers.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Stage keys used inside one critical-value computation.
STAGE_MAX_ABS = 3
STAGE_LIMIT = 5
STAGE_NAIVE = 7
STAGE_DATA = 11


def generator(seed: int, *keys: int) -> np.random.Generator:
    """Return a Philox generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, *keys: int) -> int:
    """Derive a 63-bit integer seed from ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0]) >> 1


def stable_id(text: str) -> int:
    """32-bit identifier of a string, stable across processes and runs."""
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:4], "big")
