"""Constraint-augmented training on counterfactual pairs.

The model is a learnable linear encoder under a fully-connected two-class
head: ``logits = W @ (M @ x) + b`` with softmax on top. Row ``k`` of ``W`` is
the label vector of class ``k`` (index 0 holds label -1, index 1 holds +1).

Per batch of B counterfactual pairs the objective is

    L = L_pred(all 2B sentences) + alpha * L_irm + beta * L_ocd

* ``L_pred`` is mean cross-entropy over the 2B sentences (a per-pair average
  would differ only by a constant factor absorbed into alpha and beta).
* ``L_irm`` sums, over the two environments {originals} and {editeds}, the
  squared derivative of the environment's mean cross-entropy with respect to
  a scalar multiplier on the logits, evaluated at 1. For softmax the scalar
  derivative has the closed form ``mean(sum_k p_k z_k - z_gold)``.
* ``L_ocd`` is the mean squared distance between pair representations after
  removing each member's component along its own gold label vector
  (unit-normalized classifier row).

All gradients are computed analytically; finite differences are used only as
a test oracle. Optimization is plain minibatch gradient descent with a fixed
learning rate, deterministic given the config seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateGeometryError,
    DivergenceError,
    ValidationError,
)
from .features import PairedDataset, Sample

__all__ = [
    "ModelParams",
    "TrainConfig",
    "TrainHistory",
    "LossBreakdown",
    "label_index",
    "predict_proba",
    "predict_label",
    "prediction_loss",
    "risk_scale_derivative",
    "irm_penalty",
    "ocd_penalty",
    "total_loss",
    "train_ecf",
    "train_unpaired",
    "effective_linear_map",
]

NEG_INDEX = 0
POS_INDEX = 1


def label_index(label: int) -> int:
    """Class index for a label: -1 -> 0, +1 -> 1."""
    if label == -1:
        return NEG_INDEX
    if label == 1:
        return POS_INDEX
    raise ValidationError(f"label must be -1 or +1, got {label!r}")


@dataclass(eq=False)
class ModelParams:
    """Linear encoder plus fully-connected label-vector head."""

    encoder: np.ndarray  # (d_repr, D)
    classifier: np.ndarray  # (2, d_repr)
    bias: np.ndarray  # (2,)

    def __post_init__(self) -> None:
        self.encoder = np.asarray(self.encoder, dtype=np.float64)
        self.classifier = np.asarray(self.classifier, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.encoder.ndim != 2 or self.encoder.shape[0] < 1:
            raise ValidationError(f"encoder must be (d_repr, D), got {self.encoder.shape}")
        if self.classifier.shape != (2, self.encoder.shape[0]):
            raise ValidationError(
                f"classifier must be (2, {self.encoder.shape[0]}), "
                f"got {self.classifier.shape}"
            )
        if self.bias.shape != (2,):
            raise ValidationError(f"bias must have length 2, got {self.bias.shape}")
        for name in ("encoder", "classifier", "bias"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValidationError(f"{name} must be finite")

    @property
    def d_repr(self) -> int:
        return self.encoder.shape[0]

    @property
    def input_dim(self) -> int:
        return self.encoder.shape[1]

    def copy(self) -> "ModelParams":
        return ModelParams(
            encoder=self.encoder.copy(),
            classifier=self.classifier.copy(),
            bias=self.bias.copy(),
        )

    def to_dict(self) -> dict:
        return {
            "d_repr": self.d_repr,
            "encoder": [[float(v) for v in row] for row in self.encoder],
            "classifier": [[float(v) for v in row] for row in self.classifier],
            "bias": [float(v) for v in self.bias],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        params = cls(
            encoder=data["encoder"],
            classifier=data["classifier"],
            bias=data["bias"],
        )
        if int(data.get("d_repr", params.d_repr)) != params.d_repr:
            raise ValidationError("d_repr does not match encoder shape")
        return params

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ModelParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class TrainConfig:
    """Optimization and loss-weighting settings.

    The defaults mirror the published sentiment-analysis recurrent-model
    setup: alpha 1.6, beta 0.1, learning rate 1e-3, 100 epochs, batches of
    32 pairs. ``d_repr=None`` sizes the representation to the input
    dimension; ``identity_encoder`` freezes the encoder at the identity for
    analysis runs (requires d_repr == D).
    """

    alpha: float = 1.6
    beta: float = 0.1
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_pairs: int = 32
    seed: int = 0
    d_repr: int | None = None
    identity_encoder: bool = False

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError("alpha and beta must be >= 0")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.batch_pairs < 1:
            raise ValidationError("batch_pairs must be >= 1")
        if self.d_repr is not None and self.d_repr < 1:
            raise ValidationError("d_repr must be >= 1")


@dataclass
class TrainHistory:
    """Per-epoch loss components and in-distribution accuracy."""

    prediction_loss: list[float] = field(default_factory=list)
    irm_penalty: list[float] = field(default_factory=list)
    ocd_penalty: list[float] = field(default_factory=list)
    total_loss: list[float] = field(default_factory=list)
    train_accuracy: list[float] = field(default_factory=list)

    def append(self, pred: float, irm: float, ocd: float, total: float, acc: float) -> None:
        self.prediction_loss.append(float(pred))
        self.irm_penalty.append(float(irm))
        self.ocd_penalty.append(float(ocd))
        self.total_loss.append(float(total))
        self.train_accuracy.append(float(acc))

    def __len__(self) -> int:
        return len(self.total_loss)

    def to_rows(self) -> list[dict]:
        return [
            {
                "epoch": i,
                "loss_p": self.prediction_loss[i],
                "loss_irm": self.irm_penalty[i],
                "loss_ocd": self.ocd_penalty[i],
                "loss_total": self.total_loss[i],
                "train_acc": self.train_accuracy[i],
            }
            for i in range(len(self))
        ]


@dataclass(frozen=True)
class LossBreakdown:
    """Total loss and its three components (unweighted penalties)."""

    total: float
    prediction: float
    irm: float
    ocd: float


# ---------------------------------------------------------------------------
# Forward pieces
# ---------------------------------------------------------------------------


def _features_matrix(batch: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([s.features for s in batch])
    gold = np.array([label_index(s.label) for s in batch])
    return X, gold


def _logits(params: ModelParams, X: np.ndarray) -> np.ndarray:
    return (X @ params.encoder.T) @ params.classifier.T + params.bias


def _softmax(Z: np.ndarray) -> np.ndarray:
    shifted = Z - Z.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    return expz / expz.sum(axis=1, keepdims=True)


def _ce_per_sample(Z: np.ndarray, gold: np.ndarray) -> np.ndarray:
    lse = np.logaddexp(Z[:, 0], Z[:, 1])
    return lse - Z[np.arange(Z.shape[0]), gold]


def predict_proba(params: ModelParams, features: Sequence[float]) -> np.ndarray:
    """Class probabilities ``[p(label=-1), p(label=+1)]`` for one input."""
    x = np.asarray(features, dtype=np.float64).reshape(-1)
    if x.shape[0] != params.input_dim:
        raise ValidationError(
            f"features have length {x.shape[0]}, model expects {params.input_dim}"
        )
    if not np.all(np.isfinite(x)):
        raise ValidationError("features must be finite")
    return _softmax(_logits(params, x[None, :]))[0]


def predict_label(params: ModelParams, features: Sequence[float]) -> int:
    """Predicted label; exact ties resolve to +1."""
    proba = predict_proba(params, features)
    return 1 if proba[POS_INDEX] >= proba[NEG_INDEX] else -1


def prediction_loss(params: ModelParams, batch: Sequence[Sample]) -> float:
    """Mean cross-entropy over the batch (compensated summation)."""
    if not batch:
        raise ValidationError("batch must be nonempty")
    X, gold = _features_matrix(batch)
    terms = _ce_per_sample(_logits(params, X), gold)
    return math.fsum(terms.tolist()) / len(batch)


def risk_scale_derivative(params: ModelParams, batch: Sequence[Sample]) -> float:
    """d/dw of the batch's mean cross-entropy under logits ``w * z`` at w=1.

    Closed form: ``mean(sum_k p_k z_k - z_gold)``.
    """
    if not batch:
        raise ValidationError("batch must be nonempty")
    X, gold = _features_matrix(batch)
    Z = _logits(params, X)
    P = _softmax(Z)
    return float(np.mean((P * Z).sum(axis=1) - Z[np.arange(Z.shape[0]), gold]))


def irm_penalty(
    params: ModelParams, env_batches: Sequence[Sequence[Sample]]
) -> float:
    """Sum over environments of the squared logit-scale risk derivative."""
    if len(env_batches) < 2:
        raise ValidationError(
            "invariance penalty needs >= 2 environments, got "
            f"{len(env_batches)}"
        )
    total = 0.0
    for batch in env_batches:
        delta = risk_scale_derivative(params, batch)
        total += delta * delta  # not **2: float pow raises on overflow
    return total


def _pair_matrices(
    pairs: Sequence[tuple[Sample, Sample]],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if not pairs:
        raise ValidationError("pair list must be nonempty")
    X_o = np.stack([o.features for o, _ in pairs])
    X_e = np.stack([e.features for _, e in pairs])
    gold_o = np.array([label_index(o.label) for o, _ in pairs])
    gold_e = np.array([label_index(e.label) for _, e in pairs])
    if np.any(gold_o == gold_e):
        raise ValidationError("pair members must have opposite labels")
    return X_o, X_e, gold_o, gold_e


def _ocd_geometry(params: ModelParams, X: np.ndarray, gold: np.ndarray):
    """Representations, their gold rows, and projection intermediates."""
    H = X @ params.encoder.T
    W = params.classifier[gold]  # (n, d_repr)
    n2 = (W * W).sum(axis=1)
    if np.any(n2 == 0.0):
        raise DegenerateGeometryError(
            "classifier has a zero-norm label vector; projection undefined"
        )
    s = (H * W).sum(axis=1)
    orth = H - (s / n2)[:, None] * W
    return H, W, n2, s, orth


def ocd_penalty(
    params: ModelParams, pairs: Sequence[tuple[Sample, Sample]]
) -> float:
    """Mean squared orthogonal-component distance over pairs.

    Each member's representation is projected off its own gold label vector;
    the penalty compares what remains.
    """
    X_o, X_e, gold_o, gold_e = _pair_matrices(pairs)
    *_, orth_o = _ocd_geometry(params, X_o, gold_o)
    *_, orth_e = _ocd_geometry(params, X_e, gold_e)
    diff = orth_o - orth_e
    return float(np.mean((diff * diff).sum(axis=1)))


def total_loss(
    params: ModelParams,
    batch_pairs: Sequence[tuple[Sample, Sample]],
    config: TrainConfig,
) -> LossBreakdown:
    """Full objective on a batch of pairs; components are unweighted."""
    if not batch_pairs:
        raise ValidationError("batch must contain at least one pair")
    pooled: list[Sample] = []
    for orig, edit in batch_pairs:
        pooled.append(orig)
        pooled.append(edit)
    pred = prediction_loss(params, pooled)
    irm = irm_penalty(
        params, [[o for o, _ in batch_pairs], [e for _, e in batch_pairs]]
    )
    ocd = ocd_penalty(params, batch_pairs)
    total = pred + config.alpha * irm + config.beta * ocd
    return LossBreakdown(total=total, prediction=pred, irm=irm, ocd=ocd)


# ---------------------------------------------------------------------------
# Analytic gradients
# ---------------------------------------------------------------------------


class _Grads:
    """Accumulator matching ModelParams shapes."""

    def __init__(self, params: ModelParams):
        self.encoder = np.zeros_like(params.encoder)
        self.classifier = np.zeros_like(params.classifier)
        self.bias = np.zeros_like(params.bias)


def _backprop_dZ(
    params: ModelParams, grads: _Grads, dZ: np.ndarray, X: np.ndarray, H: np.ndarray
) -> None:
    grads.bias += dZ.sum(axis=0)
    grads.classifier += dZ.T @ H
    grads.encoder += (dZ @ params.classifier).T @ X


def _prediction_grads(
    params: ModelParams, grads: _Grads, X: np.ndarray, gold: np.ndarray
) -> float:
    n = X.shape[0]
    H = X @ params.encoder.T
    Z = H @ params.classifier.T + params.bias
    P = _softmax(Z)
    dZ = P.copy()
    dZ[np.arange(n), gold] -= 1.0
    dZ /= n
    _backprop_dZ(params, grads, dZ, X, H)
    return math.fsum(_ce_per_sample(Z, gold).tolist()) / n


def _irm_env_grads(
    params: ModelParams, grads: _Grads, X: np.ndarray, gold: np.ndarray, weight: float
) -> float:
    """One environment's squared scale-derivative and its gradient."""
    n = X.shape[0]
    H = X @ params.encoder.T
    Z = H @ params.classifier.T + params.bias
    P = _softmax(Z)
    pz = (P * Z).sum(axis=1)
    delta = float(np.mean(pz - Z[np.arange(n), gold]))
    # d(delta)/dZ per sample: p * (1 + z - p.z) - onehot(gold), all over n
    dF = P * (1.0 + Z - pz[:, None])
    dF[np.arange(n), gold] -= 1.0
    dZ = (weight * 2.0 * delta / n) * dF
    _backprop_dZ(params, grads, dZ, X, H)
    return delta * delta


def _ocd_grads(
    params: ModelParams,
    grads: _Grads,
    X_o: np.ndarray,
    X_e: np.ndarray,
    gold_o: np.ndarray,
    gold_e: np.ndarray,
    weight: float,
) -> float:
    n = X_o.shape[0]
    H_o, W_o, n2_o, s_o, orth_o = _ocd_geometry(params, X_o, gold_o)
    H_e, W_e, n2_e, s_e, orth_e = _ocd_geometry(params, X_e, gold_e)
    R = orth_o - orth_e
    penalty = float(np.mean((R * R).sum(axis=1)))
    scale = weight * 2.0 / n

    rw_o = (R * W_o).sum(axis=1)
    rw_e = (R * W_e).sum(axis=1)
    # d/dH is the projector applied to R (projectors are symmetric)
    dH_o = scale * (R - (rw_o / n2_o)[:, None] * W_o)
    dH_e = -scale * (R - (rw_e / n2_e)[:, None] * W_e)
    grads.encoder += dH_o.T @ X_o + dH_e.T @ X_e

    # d/dw for the original member's gold row:
    #   -(r.w)/|w|^2 h - (h.w)/|w|^2 r + 2 (h.w)(r.w)/|w|^4 w
    g_o = scale * (
        -(rw_o / n2_o)[:, None] * H_o
        - (s_o / n2_o)[:, None] * R
        + (2.0 * s_o * rw_o / n2_o**2)[:, None] * W_o
    )
    # Mirror for the edited member (enters the residual with opposite sign).
    g_e = scale * (
        (rw_e / n2_e)[:, None] * H_e
        + (s_e / n2_e)[:, None] * R
        - (2.0 * s_e * rw_e / n2_e**2)[:, None] * W_e
    )
    np.add.at(grads.classifier, gold_o, g_o)
    np.add.at(grads.classifier, gold_e, g_e)
    return penalty


def _total_grads(
    params: ModelParams,
    pairs: Sequence[tuple[Sample, Sample]],
    alpha: float,
    beta: float,
) -> tuple[LossBreakdown, _Grads]:
    """Loss breakdown and exact gradient of the weighted total."""
    X_o, X_e, gold_o, gold_e = _pair_matrices(pairs)
    X = np.concatenate([X_o, X_e])
    gold = np.concatenate([gold_o, gold_e])
    grads = _Grads(params)
    pred = _prediction_grads(params, grads, X, gold)
    irm = 0.0
    if alpha != 0.0:
        irm += _irm_env_grads(params, grads, X_o, gold_o, alpha)
        irm += _irm_env_grads(params, grads, X_e, gold_e, alpha)
    else:
        irm = irm_penalty(params, [[o for o, _ in pairs], [e for _, e in pairs]])
    ocd = (
        _ocd_grads(params, grads, X_o, X_e, gold_o, gold_e, beta)
        if beta != 0.0
        else ocd_penalty(params, pairs)
    )
    breakdown = LossBreakdown(
        total=pred + alpha * irm + beta * ocd, prediction=pred, irm=irm, ocd=ocd
    )
    return breakdown, grads


def _unpaired_grads(
    params: ModelParams, batch: Sequence[Sample]
) -> tuple[float, _Grads]:
    X, gold = _features_matrix(batch)
    grads = _Grads(params)
    pred = _prediction_grads(params, grads, X, gold)
    return pred, grads


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


def _init_params(rng: np.random.Generator, d_repr: int, dim: int, identity: bool) -> ModelParams:
    if identity:
        if d_repr != dim:
            raise ValidationError(
                f"identity encoder requires d_repr == input dim ({dim}), got {d_repr}"
            )
        encoder = np.eye(dim)
    else:
        encoder = rng.uniform(-0.05, 0.05, size=(d_repr, dim))
    classifier = rng.uniform(-0.05, 0.05, size=(2, d_repr))
    bias = rng.uniform(-0.05, 0.05, size=2)
    return ModelParams(encoder=encoder, classifier=classifier, bias=bias)


def _apply_update(params: ModelParams, grads: _Grads, lr: float, freeze_encoder: bool) -> None:
    if not freeze_encoder:
        params.encoder -= lr * grads.encoder
    params.classifier -= lr * grads.classifier
    params.bias -= lr * grads.bias


def _batch_accuracy(params: ModelParams, X: np.ndarray, gold: np.ndarray) -> float:
    Z = _logits(params, X)
    pred = np.where(Z[:, POS_INDEX] >= Z[:, NEG_INDEX], POS_INDEX, NEG_INDEX)
    return float(np.mean(pred == gold))


def _check_finite(total: float, epoch: int, lr: float) -> None:
    if not math.isfinite(total):
        raise DivergenceError(
            f"total loss became non-finite at epoch {epoch} (learning_rate={lr:g}); "
            "reduce the learning rate or the penalty weights"
        )


def train_ecf(
    paired_data: PairedDataset, config: TrainConfig
) -> tuple[ModelParams, TrainHistory]:
    """Minibatch gradient descent on the full objective over pair batches.

    Deterministic given (data, config): parameters start from a seeded
    uniform(-0.05, 0.05) draw and pairs are reshuffled each epoch from the
    same generator. History records full-dataset loss components and
    accuracy after each epoch.
    """
    if paired_data.n_pairs < 1:
        raise ValidationError("paired_data must contain at least one pair")
    pairs = paired_data.pairs
    dim = paired_data.spec.dim
    d_repr = config.d_repr if config.d_repr is not None else dim
    rng = np.random.default_rng(config.seed)
    params = _init_params(rng, d_repr, dim, config.identity_encoder)

    X_o, X_e, gold_o, gold_e = _pair_matrices(pairs)
    X_all = np.concatenate([X_o, X_e])
    gold_all = np.concatenate([gold_o, gold_e])

    history = TrainHistory()
    n = len(pairs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_pairs):
            idx = order[start : start + config.batch_pairs]
            batch = [pairs[i] for i in idx]
            breakdown, grads = _total_grads(params, batch, config.alpha, config.beta)
            _check_finite(breakdown.total, epoch, config.learning_rate)
            _apply_update(params, grads, config.learning_rate, config.identity_encoder)
        epoch_losses = total_loss(params, pairs, config)
        _check_finite(epoch_losses.total, epoch, config.learning_rate)
        history.append(
            epoch_losses.prediction,
            epoch_losses.irm,
            epoch_losses.ocd,
            epoch_losses.total,
            _batch_accuracy(params, X_all, gold_all),
        )
    return params, history


def train_unpaired(
    samples: Sequence[Sample], config: TrainConfig
) -> tuple[ModelParams, TrainHistory]:
    """Prediction-only training on a flat sample list.

    The invariance and pair penalties are undefined without environments or
    pairs, so the config must have alpha == beta == 0. Batches hold
    ``2 * batch_pairs`` sentences to match the step granularity of paired
    training.
    """
    if not samples:
        raise ValidationError("samples must be nonempty")
    if config.alpha != 0.0 or config.beta != 0.0:
        raise ValidationError(
            "unpaired training requires alpha == beta == 0; the penalties "
            "are undefined without pairs and environments"
        )
    X_all, gold_all = _features_matrix(samples)
    dim = X_all.shape[1]
    d_repr = config.d_repr if config.d_repr is not None else dim
    rng = np.random.default_rng(config.seed)
    params = _init_params(rng, d_repr, dim, config.identity_encoder)

    history = TrainHistory()
    n = len(samples)
    batch_size = 2 * config.batch_pairs
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            pred, grads = _unpaired_grads(params, [samples[i] for i in idx])
            _check_finite(pred, epoch, config.learning_rate)
            _apply_update(params, grads, config.learning_rate, config.identity_encoder)
        pred = prediction_loss(params, samples)
        _check_finite(pred, epoch, config.learning_rate)
        history.append(
            pred, 0.0, 0.0, pred, _batch_accuracy(params, X_all, gold_all)
        )
    return params, history


def effective_linear_map(params: ModelParams) -> np.ndarray:
    """Collapse the model into one decision vector over input features.

    Returns ``(row_+ - row_-) @ encoder``; positive dot products favor the
    +1 class. The bias is excluded: the map diagnoses feature reliance, and
    block norms of this vector feed the myopia ratios.
    """
    row_diff = params.classifier[POS_INDEX] - params.classifier[NEG_INDEX]
    return row_diff @ params.encoder
