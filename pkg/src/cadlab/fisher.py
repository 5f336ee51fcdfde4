"""Fisher's Linear Discriminant machinery for the block feature model.

Closed forms (diagonal covariances throughout):

* original data:  ``[mu_e/var_e, mu_u/var_u, mu_r/var_r]``
* paired data:    ``[mu_e/var_e, 0, 0]`` -- the myopia phenomenon: pooling
  ideal counterfactual pairs cancels the unedited and correlated signal,
  so the optimal discriminant keeps only the edited block.
* robust target:  ``[mu_e/var_e, mu_u/var_u, 0]``

Myopia is quantified by cosine similarity to the robust classifier. With
``e = |Phi_e|^2``, ``u = |Phi_u|^2``, ``r = |Phi_r|^2``:

    cos_ori = 1 / sqrt(1 + r / (e + u))
    cos_cad = 1 / sqrt(1 + u / e)

The convex interpolation ``lambda * Phi_ori + (1 - lambda) * Phi_cad``
strictly beats both at ``lambda* = u / (u + r)`` whenever u and r are both
nonzero (the dominance margin works out to ``e * r^2 / (u + r)``).

The empirical fit uses explicit class means, ``(mean+ - mean-) / 2``, and the
average of the per-class diagonal sample covariances, which is the estimator
consistent with the closed forms above.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateGeometryError,
    InsufficientDataError,
    SingularScatterError,
    ValidationError,
)
from .features import FeatureSpec, Sample

__all__ = [
    "LinearClassifier",
    "fld_fit",
    "closed_form_ori",
    "closed_form_cad",
    "closed_form_rob",
    "cosine_to_robust",
    "interpolate",
    "optimal_lambda",
    "cosine_interpolated",
    "misaligned_cad_block",
    "cosine_forms",
    "classifier_to_file",
    "classifier_from_file",
]


@dataclass(eq=False)
class LinearClassifier:
    """A weight vector over the full feature space with block views."""

    weights: np.ndarray
    block_dims: tuple[int, int, int]

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.block_dims = tuple(int(d) for d in self.block_dims)
        if len(self.block_dims) != 3 or any(d < 0 for d in self.block_dims):
            raise ValidationError(f"bad block_dims {self.block_dims!r}")
        if self.weights.shape[0] != sum(self.block_dims):
            raise ValidationError(
                f"weight length {self.weights.shape[0]} does not match "
                f"block_dims {self.block_dims}"
            )

    def _slices(self) -> tuple[slice, slice, slice]:
        a, b, _ = self.block_dims
        return slice(0, a), slice(a, a + b), slice(a + b, None)

    @property
    def edited(self) -> np.ndarray:
        return self.weights[self._slices()[0]]

    @property
    def unedited(self) -> np.ndarray:
        return self.weights[self._slices()[1]]

    @property
    def correlated(self) -> np.ndarray:
        return self.weights[self._slices()[2]]

    @property
    def causal(self) -> np.ndarray:
        a, b, _ = self.block_dims
        return self.weights[: a + b]

    def to_dict(self) -> dict:
        return {
            "block_dims": list(self.block_dims),
            "weights": [float(w) for w in self.weights],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LinearClassifier":
        return cls(weights=data["weights"], block_dims=tuple(data["block_dims"]))


def classifier_to_file(classifier: LinearClassifier, path: str | Path) -> None:
    Path(path).write_text(json.dumps(classifier.to_dict(), indent=2) + "\n")


def classifier_from_file(path: str | Path) -> LinearClassifier:
    return LinearClassifier.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Empirical fit
# ---------------------------------------------------------------------------


def fld_fit(samples: Sequence[Sample], block_dims: Sequence[int]) -> LinearClassifier:
    """Fit the diagonal Fisher discriminant from labeled samples.

    Returns ``S_w^-1 . (mean+ - mean-)/2`` with ``S_w`` the average of the two
    per-class diagonal sample covariances. Requires at least two samples per
    class and strictly positive within-class variance in every dimension.
    """
    block_dims = tuple(int(d) for d in block_dims)
    dim = sum(block_dims)
    if not samples:
        raise InsufficientDataError("no samples")
    X = np.stack([s.features for s in samples])
    if X.shape[1] != dim:
        raise ValidationError(
            f"samples have {X.shape[1]} features, block_dims imply {dim}"
        )
    y = np.array([s.label for s in samples])
    X_pos, X_neg = X[y == 1], X[y == -1]
    for name, block in (("+1", X_pos), ("-1", X_neg)):
        if block.shape[0] < 2:
            raise InsufficientDataError(
                f"need >= 2 samples of class {name}, got {block.shape[0]}"
            )
    direction = (X_pos.mean(axis=0) - X_neg.mean(axis=0)) / 2.0
    scatter = (X_pos.var(axis=0, ddof=1) + X_neg.var(axis=0, ddof=1)) / 2.0
    zero = np.flatnonzero(scatter == 0.0)
    if zero.size:
        raise SingularScatterError(
            f"within-class scatter is zero at dimension {int(zero[0])}"
        )
    return LinearClassifier(weights=direction / scatter, block_dims=block_dims)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def closed_form_ori(spec: FeatureSpec) -> LinearClassifier:
    """Optimal classifier for original data: blockwise ``mu / var``."""
    weights = np.concatenate(
        [
            spec.mu_edited / spec.var_edited,
            spec.mu_unedited / spec.var_unedited,
            spec.mu_correlated / spec.var_correlated,
        ]
    )
    return LinearClassifier(weights=weights, block_dims=spec.block_dims)


def closed_form_cad(spec: FeatureSpec) -> LinearClassifier:
    """Optimal classifier for ideal paired data: edited block only."""
    weights = np.concatenate(
        [
            spec.mu_edited / spec.var_edited,
            np.zeros(spec.d_unedited),
            np.zeros(spec.d_correlated),
        ]
    )
    return LinearClassifier(weights=weights, block_dims=spec.block_dims)


def closed_form_rob(spec: FeatureSpec) -> LinearClassifier:
    """Robust target: both causal blocks, correlated block exactly zero."""
    weights = np.concatenate(
        [
            spec.mu_edited / spec.var_edited,
            spec.mu_unedited / spec.var_unedited,
            np.zeros(spec.d_correlated),
        ]
    )
    return LinearClassifier(weights=weights, block_dims=spec.block_dims)


# ---------------------------------------------------------------------------
# Myopia geometry
# ---------------------------------------------------------------------------


def cosine_to_robust(classifier: LinearClassifier, spec: FeatureSpec) -> float:
    """Cosine similarity between a classifier and the spec's robust target."""
    if classifier.block_dims != spec.block_dims:
        raise ValidationError(
            f"classifier block_dims {classifier.block_dims} do not match "
            f"spec block_dims {spec.block_dims}"
        )
    w = classifier.weights
    robust = closed_form_rob(spec).weights
    nw, nr = np.linalg.norm(w), np.linalg.norm(robust)
    if nw == 0.0 or nr == 0.0:
        raise DegenerateGeometryError("cosine undefined for a zero-norm classifier")
    return float(np.dot(w, robust) / (nw * nr))


def interpolate(
    phi_ori: LinearClassifier, phi_cad: LinearClassifier, lam: float
) -> LinearClassifier:
    """Convex combination ``lam * phi_ori + (1 - lam) * phi_cad``."""
    if phi_ori.block_dims != phi_cad.block_dims:
        raise ValidationError(
            f"block_dims differ: {phi_ori.block_dims} vs {phi_cad.block_dims}"
        )
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda must be in [0, 1], got {lam}")
    return LinearClassifier(
        weights=lam * phi_ori.weights + (1.0 - lam) * phi_cad.weights,
        block_dims=phi_ori.block_dims,
    )


def _closed_form_sq_norms(spec: FeatureSpec) -> tuple[float, float, float]:
    e = float(np.sum((spec.mu_edited / spec.var_edited) ** 2))
    u = float(np.sum((spec.mu_unedited / spec.var_unedited) ** 2))
    r = float(np.sum((spec.mu_correlated / spec.var_correlated) ** 2))
    return e, u, r


def cosine_forms(e_sq: float, u_sq: float, r_sq: float) -> tuple[float, float]:
    """The two myopia cosines from squared block norms.

    ``cos_ori = 1/sqrt(1 + r/(e+u))`` and ``cos_cad = 1/sqrt(1 + u/e)``.
    Degenerate denominators take the limit value 0.0; 0/0 yields nan.
    """
    causal = e_sq + u_sq
    if causal > 0.0:
        cos_ori = 1.0 / math.sqrt(1.0 + r_sq / causal)
    else:
        cos_ori = 0.0 if r_sq > 0.0 else math.nan
    if e_sq > 0.0:
        cos_cad = 1.0 / math.sqrt(1.0 + u_sq / e_sq)
    else:
        cos_cad = 0.0 if u_sq > 0.0 else math.nan
    return cos_ori, cos_cad


def optimal_lambda(spec: FeatureSpec) -> float:
    """Interpolation weight maximizing cosine similarity to the robust target."""
    _, u, r = _closed_form_sq_norms(spec)
    if u + r == 0.0:
        raise DegenerateGeometryError(
            "Phi_ori equals Phi_cad; every lambda is optimal"
        )
    return u / (u + r)


def cosine_interpolated(spec: FeatureSpec) -> float:
    """Cosine to the robust target achieved at the optimal interpolation.

    Evaluates the closed form
    ``(e + u^2/(u+r)) / (sqrt(e+u) * sqrt(e + (u^3 + u^2 r)/(u+r)^2))``
    which strictly exceeds both plain cosines whenever u > 0 and r > 0.
    """
    e, u, r = _closed_form_sq_norms(spec)
    if u + r == 0.0:
        raise DegenerateGeometryError(
            "Phi_ori equals Phi_cad; every lambda is optimal"
        )
    if e + u == 0.0:
        raise DegenerateGeometryError("robust classifier has zero norm")
    numerator = e + u**2 / (u + r)
    denominator = math.sqrt(e + u) * math.sqrt(e + (u**3 + u**2 * r) / (u + r) ** 2)
    return numerator / denominator


def misaligned_cad_block(
    spec: FeatureSpec, delta_hr: Sequence[float], n: int
) -> np.ndarray:
    """Correlated-block weight induced by misaligned pairs.

    For an aggregate pair misalignment ``delta_hr`` over ``n`` pairs the
    diagonalized closed form is ``delta_hr / (4 n (mu_r^2 + var_r))``
    elementwise; the zero vector iff ``delta_hr`` is zero.
    """
    delta = np.asarray(delta_hr, dtype=np.float64).reshape(-1)
    if delta.shape[0] != spec.d_correlated:
        raise ValidationError(
            f"delta_hr has length {delta.shape[0]}, expected {spec.d_correlated}"
        )
    n = int(n)
    if n < 1:
        raise ValidationError("n must be >= 1")
    return delta / (4.0 * n * (spec.mu_correlated**2 + spec.var_correlated))
