"""Deterministic seed derivation.

One master seed fans out into independent child seeds through
``numpy.random.SeedSequence([master, index])``. The derivation is
counter-based: child ``index`` depends only on ``(master, index)``, so adding
new tasks never perturbs the streams of existing ones, and parallel workers
get independent streams regardless of scheduling order. This is the one
splitting rule used everywhere in the package (dataset chunks, grid cells,
CLI sub-tasks).
"""

from __future__ import annotations

import numpy as np


def derive_seed(master_seed: int, index: int) -> int:
    """Child seed number ``index`` under ``master_seed``."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1)[0])


def derived_rng(master_seed: int, index: int) -> np.random.Generator:
    """Generator seeded with ``derive_seed(master_seed, index)``."""
    return np.random.default_rng(derive_seed(master_seed, index))
