"""Built-in feature specs and experiment defaults.

Two specs ship with the package so experiments need no hand-written config:

* ``reference``: one dimension per block, unit means and variances. All the
  closed-form numbers are round for this spec.
* ``hard``: 4 edited / 4 unedited / 8 correlated dimensions with randomized
  means drawn once from a fixed, published seed. Used by the end-to-end
  training experiments.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .features import FeatureSpec
from .training import TrainConfig

__all__ = [
    "reference_spec",
    "hard_spec",
    "get_preset",
    "PRESET_NAMES",
    "hard_train_config",
    "HARD_N_PAIRS",
    "HARD_NOISE_SD",
]

# Published seed for the hard preset's randomized means.
HARD_PRESET_SEED = 20240117

# Canonical data sizes for the end-to-end myopia experiments on the hard
# preset (training pairs and pair misalignment noise).
HARD_N_PAIRS = 400
HARD_NOISE_SD = 1.0

PRESET_NAMES = ("reference", "hard")


def reference_spec() -> FeatureSpec:
    """All-ones spec: dims (1, 1, 1), unit means, unit variances."""
    return FeatureSpec(
        d_edited=1,
        d_unedited=1,
        d_correlated=1,
        mu_edited=[1.0],
        mu_unedited=[1.0],
        mu_correlated=[1.0],
        var_edited=[1.0],
        var_unedited=[1.0],
        var_correlated=[1.0],
    )


def hard_spec() -> FeatureSpec:
    """Harder spec: dims (4, 4, 8), randomized means, fixed seed."""
    rng = np.random.default_rng(HARD_PRESET_SEED)
    mu_e = rng.uniform(0.3, 0.7, size=4)
    mu_u = rng.uniform(0.5, 1.0, size=4)
    mu_r = rng.uniform(0.5, 1.0, size=8)
    return FeatureSpec(
        d_edited=4,
        d_unedited=4,
        d_correlated=8,
        mu_edited=mu_e,
        mu_unedited=mu_u,
        mu_correlated=mu_r,
        var_edited=np.full(4, 1.0),
        var_unedited=np.full(4, 1.0),
        var_correlated=np.full(8, 1.0),
    )


def get_preset(name: str) -> FeatureSpec:
    if name == "reference":
        return reference_spec()
    if name == "hard":
        return hard_spec()
    raise ValidationError(
        f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
    )


def hard_train_config(seed: int = 0) -> TrainConfig:
    """Training settings for the end-to-end experiments on the hard preset."""
    return TrainConfig(
        alpha=1.6,
        beta=0.1,
        learning_rate=0.05,
        epochs=40,
        batch_pairs=32,
        seed=seed,
        d_repr=8,
    )
