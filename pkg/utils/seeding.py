"""Deterministic seed derivation for reproducible sub-streams."""

from __future__ import annotations

import numpy as np


def derive_seed(*keys: int) -> int:
    """Hash a chain of non-negative integers into a 64-bit seed.

    ``derive_seed(master, i)`` gives trajectory ``i`` its own stream;
    distinct key chains give statistically independent generators.
    """
    sequence = np.random.SeedSequence([int(k) for k in keys])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Build the generator every simulation routine draws from."""
    return np.random.default_rng(int(seed))
