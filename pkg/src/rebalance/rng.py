"""Deterministic random-stream derivation.

Every randomized routine in the package consumes a ``numpy`` Generator
backed by Philox, a counter-based bit generator.  Streams are addressed
by ``(seed, *path)`` where the path is a tuple of small non-negative
integers (replicate index, group index, ...).  Distinct paths give
statistically independent streams, and replicate ``b`` can be
regenerated without drawing replicates ``0..b-1``, which is what makes
parallel sampling reproducible.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream addressed by ``(seed, *path)``."""
    key = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(key))


def derive_seed(seed: int, *path: int) -> int:
    """Child integer seed for nested orchestration (e.g. replayed designs)."""
    key = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(key.generate_state(2, dtype=np.uint64)[0])
