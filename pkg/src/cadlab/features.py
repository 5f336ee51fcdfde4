"""Synthetic sentence features as labeled Gaussian blocks.

A "sentence" is a feature vector laid out as ``[edited | unedited | correlated]``.
Each block of a sample with label ``y`` in {-1, +1} is drawn independently from
``N(y * mu_block, diag(var_block))``. The two causal blocks (edited, unedited)
keep a fixed relationship with the label across environments; the correlated
block's relationship is dataset-specific and may be shifted, scaled, or zeroed
out of distribution.

Counterfactual augmentation flips a sample's label and negates exactly the
edited block. The unedited block is copied verbatim; the correlated block is
copied up to optional i.i.d. Gaussian misalignment noise. With zero noise the
members of a pair agree exactly outside the edited block, so a pooled paired
dataset carries no unedited or correlated label signal at all: the
label-conditional means of those blocks cancel pair by pair.

Centering note: pooled over balanced classes every block has mean zero in
expectation. Per class, the correlated block of original-only data is centered
at ``y * mu_correlated``; only the balanced pool is centered.

All operations are pure functions of (inputs, seed). Parallel generation, if
ever needed, must split seeds with :func:`cadlab.seeds.derive_seed`.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .errors import ValidationError

__all__ = [
    "Environment",
    "FeatureSpec",
    "Sample",
    "PairedDataset",
    "OODShift",
    "sample_dataset",
    "augment_counterfactual",
    "make_paired_dataset",
    "make_ood_spec",
    "spec_from_dict",
    "spec_to_dict",
    "spec_from_file",
    "spec_to_file",
    "dataset_to_csv",
]


class Environment(str, Enum):
    """Where a sample comes from."""

    ORIGINAL = "original"
    EDITED = "edited"
    OOD = "ood"


def _as_readonly_vector(value, name: str, length: int) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64).reshape(-1).copy()
    if arr.shape[0] != length:
        raise ValidationError(
            f"{name} must have length {length}, got {arr.shape[0]}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


def _check_count(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    if value < 0:
        raise ValidationError(f"{name} must be >= 0, got {value}")
    return int(value)


@dataclass(frozen=True, eq=False)
class FeatureSpec:
    """Generative law: block dimensions plus per-block Gaussian parameters.

    Covariances are diagonal and stored as positive variance vectors, so every
    matrix inverse in the closed forms is an elementwise reciprocal.
    """

    d_edited: int
    d_unedited: int
    d_correlated: int
    mu_edited: np.ndarray
    mu_unedited: np.ndarray
    mu_correlated: np.ndarray
    var_edited: np.ndarray
    var_unedited: np.ndarray
    var_correlated: np.ndarray

    def __post_init__(self) -> None:
        d_e = _check_count(self.d_edited, "d_edited")
        d_u = _check_count(self.d_unedited, "d_unedited")
        d_r = _check_count(self.d_correlated, "d_correlated")
        if d_e + d_u < 1:
            raise ValidationError(
                "at least one causal dimension required: d_edited + d_unedited >= 1"
            )
        object.__setattr__(self, "d_edited", d_e)
        object.__setattr__(self, "d_unedited", d_u)
        object.__setattr__(self, "d_correlated", d_r)
        for block, d in (("edited", d_e), ("unedited", d_u), ("correlated", d_r)):
            mu = _as_readonly_vector(getattr(self, f"mu_{block}"), f"mu_{block}", d)
            var = _as_readonly_vector(getattr(self, f"var_{block}"), f"var_{block}", d)
            if np.any(var <= 0.0):
                raise ValidationError(f"var_{block} entries must be strictly positive")
            object.__setattr__(self, f"mu_{block}", mu)
            object.__setattr__(self, f"var_{block}", var)

    @property
    def dim(self) -> int:
        return self.d_edited + self.d_unedited + self.d_correlated

    @property
    def block_dims(self) -> tuple[int, int, int]:
        return (self.d_edited, self.d_unedited, self.d_correlated)

    def slices(self) -> tuple[slice, slice, slice]:
        """Index ranges of the edited / unedited / correlated blocks."""
        a = self.d_edited
        b = a + self.d_unedited
        return slice(0, a), slice(a, b), slice(b, self.dim)

    @property
    def mu_full(self) -> np.ndarray:
        return np.concatenate([self.mu_edited, self.mu_unedited, self.mu_correlated])

    @property
    def var_full(self) -> np.ndarray:
        return np.concatenate([self.var_edited, self.var_unedited, self.var_correlated])

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureSpec):
            return NotImplemented
        return self.block_dims == other.block_dims and all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in (
                "mu_edited",
                "mu_unedited",
                "mu_correlated",
                "var_edited",
                "var_unedited",
                "var_correlated",
            )
        )


@dataclass(eq=False)
class Sample:
    """One labeled feature vector."""

    features: np.ndarray
    label: int
    pair_id: int | None = None
    environment: Environment = Environment.ORIGINAL

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1)
        if self.label not in (-1, 1):
            raise ValidationError(f"label must be -1 or +1, got {self.label!r}")
        self.label = int(self.label)
        self.environment = Environment(self.environment)


@dataclass
class PairedDataset:
    """Counterfactual pairs (original, edited) plus their generating spec."""

    pairs: list[tuple[Sample, Sample]]
    spec: FeatureSpec
    seed: int
    alignment_noise_sd: float = 0.0

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def originals(self) -> list[Sample]:
        return [o for o, _ in self.pairs]

    def editeds(self) -> list[Sample]:
        return [e for _, e in self.pairs]

    def pooled_samples(self) -> list[Sample]:
        """All sentences in the fixed order o0, e0, o1, e1, ..."""
        out: list[Sample] = []
        for orig, edit in self.pairs:
            out.append(orig)
            out.append(edit)
        return out


# ---------------------------------------------------------------------------
# Sampling and augmentation
# ---------------------------------------------------------------------------


def _alternating_labels(n: int) -> np.ndarray:
    labels = np.empty(n, dtype=np.int64)
    labels[0::2] = 1
    labels[1::2] = -1
    return labels


def _draw_samples(
    spec: FeatureSpec,
    labels: np.ndarray,
    rng: np.random.Generator,
    environment: Environment,
) -> list[Sample]:
    # Blocks are drawn in layout order; the draw order is part of the
    # determinism contract.
    n = labels.shape[0]
    cols = []
    for mu, var in (
        (spec.mu_edited, spec.var_edited),
        (spec.mu_unedited, spec.var_unedited),
        (spec.mu_correlated, spec.var_correlated),
    ):
        d = mu.shape[0]
        noise = rng.standard_normal((n, d)) if d else np.empty((n, 0))
        cols.append(labels[:, None] * mu[None, :] + noise * np.sqrt(var)[None, :])
    X = np.concatenate(cols, axis=1)
    return [
        Sample(features=X[i], label=int(labels[i]), environment=environment)
        for i in range(n)
    ]


def sample_dataset(
    spec: FeatureSpec,
    n: int,
    seed: int,
    environment: Environment = Environment.ORIGINAL,
) -> list[Sample]:
    """Draw ``n`` class-balanced samples from the spec's generative law.

    Labels alternate +1, -1, so any even prefix is balanced. ``n`` must be
    even; identical ``(spec, n, seed)`` give bit-identical output.
    """
    n = _check_count(n, "n")
    if n < 1:
        raise ValidationError("n must be >= 1")
    if n % 2 != 0:
        raise ValidationError(
            f"n must be even to keep classes balanced, got {n}"
        )
    rng = np.random.default_rng(int(seed))
    return _draw_samples(spec, _alternating_labels(n), rng, environment)


def _edited_from(
    spec: FeatureSpec, sample: Sample, noise_r: np.ndarray, pair_id: int
) -> Sample:
    s_e, s_u, s_r = spec.slices()
    x = sample.features
    if x.shape[0] != spec.dim:
        raise ValidationError(
            f"sample has {x.shape[0]} features, spec expects {spec.dim}"
        )
    edited = np.empty_like(x)
    edited[s_e] = -x[s_e]
    edited[s_u] = x[s_u]
    edited[s_r] = x[s_r] + noise_r
    sample.pair_id = pair_id
    return Sample(
        features=edited,
        label=-sample.label,
        pair_id=pair_id,
        environment=Environment.EDITED,
    )


def augment_counterfactual(
    spec: FeatureSpec,
    sample: Sample,
    alignment_noise_sd: float,
    seed: int,
    pair_id: int | None = None,
) -> Sample:
    """Counterfactually edit one original sample.

    The label flips, the edited block is negated elementwise, the unedited
    block is copied verbatim, and the correlated block is copied plus i.i.d.
    ``N(0, alignment_noise_sd^2)`` noise (zero noise means an exact copy).
    The shared pair id is written to both members.
    """
    if sample.environment is not Environment.ORIGINAL:
        raise ValidationError(
            f"can only augment ORIGINAL samples, got {sample.environment.value}"
        )
    if alignment_noise_sd < 0:
        raise ValidationError("alignment_noise_sd must be >= 0")
    d_r = spec.d_correlated
    if alignment_noise_sd > 0 and d_r > 0:
        noise = np.random.default_rng(int(seed)).standard_normal(d_r)
        noise *= alignment_noise_sd
    else:
        noise = np.zeros(d_r)
    pid = pair_id if pair_id is not None else (sample.pair_id or 0)
    return _edited_from(spec, sample, noise, pid)


def make_paired_dataset(
    spec: FeatureSpec,
    n_pairs: int,
    alignment_noise_sd: float,
    seed: int,
) -> PairedDataset:
    """Sample originals and augment each one into a counterfactual pair.

    Original labels alternate +1, -1 (exactly balanced for even ``n_pairs``,
    off by one otherwise). Child seeds for sampling and for misalignment noise
    are derived from ``seed`` with the package splitting rule.
    """
    from .seeds import derive_seed

    n_pairs = _check_count(n_pairs, "n_pairs")
    if n_pairs < 1:
        raise ValidationError("n_pairs must be >= 1")
    if alignment_noise_sd < 0:
        raise ValidationError("alignment_noise_sd must be >= 0")

    rng_samples = np.random.default_rng(derive_seed(seed, 0))
    originals = _draw_samples(
        spec, _alternating_labels(n_pairs), rng_samples, Environment.ORIGINAL
    )
    d_r = spec.d_correlated
    if alignment_noise_sd > 0 and d_r > 0:
        rng_noise = np.random.default_rng(derive_seed(seed, 1))
        noise = rng_noise.standard_normal((n_pairs, d_r)) * alignment_noise_sd
    else:
        noise = np.zeros((n_pairs, d_r))
    pairs = [
        (orig, _edited_from(spec, orig, noise[i], pair_id=i))
        for i, orig in enumerate(originals)
    ]
    return PairedDataset(
        pairs=pairs,
        spec=spec,
        seed=int(seed),
        alignment_noise_sd=float(alignment_noise_sd),
    )


# ---------------------------------------------------------------------------
# OOD shifts
# ---------------------------------------------------------------------------


class ShiftKind(str, Enum):
    FLIP_CORRELATED = "flip_correlated"
    SCALE_CORRELATED = "scale_correlated"
    ZERO_CORRELATED = "zero_correlated"


@dataclass(frozen=True)
class OODShift:
    """A change to the correlated block's mean; causal blocks never move."""

    kind: ShiftKind
    factor: float = 1.0

    @classmethod
    def flip(cls) -> "OODShift":
        return cls(ShiftKind.FLIP_CORRELATED)

    @classmethod
    def scale(cls, factor: float) -> "OODShift":
        return cls(ShiftKind.SCALE_CORRELATED, float(factor))

    @classmethod
    def zero(cls) -> "OODShift":
        return cls(ShiftKind.ZERO_CORRELATED)

    @property
    def name(self) -> str:
        if self.kind is ShiftKind.SCALE_CORRELATED:
            return f"scale_correlated:{self.factor:g}"
        return self.kind.value


def make_ood_spec(spec: FeatureSpec, shift: OODShift) -> FeatureSpec:
    """Apply an OOD shift; only ``mu_correlated`` changes."""
    if shift.kind is ShiftKind.FLIP_CORRELATED:
        mu_r = -spec.mu_correlated
    elif shift.kind is ShiftKind.SCALE_CORRELATED:
        mu_r = shift.factor * spec.mu_correlated
    elif shift.kind is ShiftKind.ZERO_CORRELATED:
        mu_r = np.zeros_like(spec.mu_correlated)
    else:  # pragma: no cover - enum is exhaustive
        raise ValidationError(f"unknown shift {shift.kind!r}")
    return replace(spec, mu_correlated=mu_r)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_SPEC_KEYS = (
    "d_edited",
    "d_unedited",
    "d_correlated",
    "mu_edited",
    "mu_unedited",
    "mu_correlated",
    "var_edited",
    "var_unedited",
    "var_correlated",
)


def spec_to_dict(spec: FeatureSpec) -> dict:
    out: dict = {}
    for key in _SPEC_KEYS:
        value = getattr(spec, key)
        out[key] = [float(v) for v in value] if isinstance(value, np.ndarray) else value
    return out


def spec_from_dict(data: dict) -> FeatureSpec:
    if not isinstance(data, dict):
        raise ValidationError(f"spec must be a mapping, got {type(data).__name__}")
    unknown = set(data) - set(_SPEC_KEYS)
    if unknown:
        raise ValidationError(f"unknown spec keys: {sorted(unknown)}")
    missing = set(_SPEC_KEYS) - set(data)
    if missing:
        raise ValidationError(f"missing spec keys: {sorted(missing)}")
    return FeatureSpec(**data)


def spec_to_file(spec: FeatureSpec, path: str | Path) -> None:
    path = Path(path)
    data = spec_to_dict(spec)
    if path.suffix == ".json":
        path.write_text(json.dumps(data, indent=2) + "\n")
    else:
        path.write_text(yaml.safe_dump(data, sort_keys=False))


def spec_from_file(path: str | Path) -> FeatureSpec:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: cannot parse spec file: {exc}") from exc
    try:
        return spec_from_dict(data)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def dataset_to_csv(
    samples: Iterable[Sample],
    block_dims: Sequence[int],
    path: str | Path,
) -> None:
    """Dump samples as CSV with a block-boundary comment line first.

    Columns: pair_id, environment, label, f_0 ... f_{D-1}. Block boundaries
    are written as half-open index ranges into the feature columns.
    """
    d_e, d_u, d_r = block_dims
    dim = d_e + d_u + d_r
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# blocks: edited=[0,{d_e}) unedited=[{d_e},{d_e + d_u}) "
            f"correlated=[{d_e + d_u},{dim})\n"
        )
        writer = csv.writer(fh)
        writer.writerow(
            ["pair_id", "environment", "label"] + [f"f_{i}" for i in range(dim)]
        )
        for sample in samples:
            if sample.features.shape[0] != dim:
                raise ValidationError(
                    f"sample has {sample.features.shape[0]} features, "
                    f"block dims imply {dim}"
                )
            writer.writerow(
                [
                    "" if sample.pair_id is None else sample.pair_id,
                    sample.environment.value,
                    sample.label,
                ]
                + [repr(float(v)) for v in sample.features]
            )
