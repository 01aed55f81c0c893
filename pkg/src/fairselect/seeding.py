"""Deterministic seed derivation.

A single master seed fans out into independent per-component streams by
feeding `(master, *path)` integer tuples to numpy's SeedSequence. The same
path always yields the same stream, and distinct paths are statistically
independent, so adding a consumer never perturbs existing ones.
"""

from __future__ import annotations

import numpy as np


def derive_seed(*parts: int) -> int:
    """A 64-bit seed deterministically mixed from the given integer path."""
    state = np.random.SeedSequence([int(p) for p in parts]).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def derive_rng(*parts: int) -> np.random.Generator:
    """A fresh PCG64 generator for the given integer path."""
    return np.random.default_rng(np.random.SeedSequence([int(p) for p in parts]))
