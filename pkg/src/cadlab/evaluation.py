"""In-distribution and shifted evaluation, plus the experiment grids.

Predictions come from the sign of a linear decision value or from the model's
argmax probability; exact ties resolve to the positive class so evaluation is
deterministic. Error counts are split by gold label (positive predicted
negative vs negative predicted positive).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .features import (
    Environment,
    FeatureSpec,
    OODShift,
    PairedDataset,
    Sample,
    make_ood_spec,
    make_paired_dataset,
    sample_dataset,
)
from .fisher import LinearClassifier, cosine_forms
from .seeds import derive_seed
from .training import (
    ModelParams,
    TrainConfig,
    _logits,
    effective_linear_map,
    train_ecf,
    train_unpaired,
)

__all__ = [
    "EvalReport",
    "MyopiaProfile",
    "evaluate",
    "ood_suite",
    "myopia_profile",
    "asymmetric_flip_report",
    "data_efficiency_curve",
    "ablation_grid",
    "ABLATION_VARIANTS",
]

IN_DISTRIBUTION = "in_distribution"


@dataclass(frozen=True)
class EvalReport:
    """Accuracy plus the error-type split for one evaluation."""

    environment: str
    n: int
    errors_pos_to_neg: int
    errors_neg_to_pos: int
    accuracy: float

    def __post_init__(self) -> None:
        errors = self.errors_pos_to_neg + self.errors_neg_to_pos
        if not 0 <= errors <= self.n:
            raise ValidationError("error counts exceed sample count")

    @classmethod
    def from_counts(
        cls, environment: str, n: int, errors_pos_to_neg: int, errors_neg_to_pos: int
    ) -> "EvalReport":
        correct = n - errors_pos_to_neg - errors_neg_to_pos
        return cls(
            environment=environment,
            n=n,
            errors_pos_to_neg=errors_pos_to_neg,
            errors_neg_to_pos=errors_neg_to_pos,
            accuracy=correct / n,
        )


@dataclass(frozen=True)
class MyopiaProfile:
    """Block norms of a decision vector and the two myopia ratios."""

    norm_edited: float
    norm_unedited: float
    norm_correlated: float
    cos_ori_form: float
    cos_cad_form: float


def _decision_values(decision, X: np.ndarray) -> np.ndarray:
    if isinstance(decision, ModelParams):
        if X.shape[1] != decision.input_dim:
            raise ValidationError(
                f"samples have {X.shape[1]} features, model expects "
                f"{decision.input_dim}"
            )
        Z = _logits(decision, X)
        return Z[:, 1] - Z[:, 0]
    weights = decision.weights if isinstance(decision, LinearClassifier) else decision
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if X.shape[1] != w.shape[0]:
        raise ValidationError(
            f"samples have {X.shape[1]} features, decision vector has {w.shape[0]}"
        )
    return X @ w


def evaluate(
    decision, samples: Sequence[Sample], environment: str = IN_DISTRIBUTION
) -> EvalReport:
    """Score samples with a decision vector, classifier, or trained model."""
    if not samples:
        raise ValidationError("samples must be nonempty")
    X = np.stack([s.features for s in samples])
    gold = np.array([s.label for s in samples])
    values = _decision_values(decision, X)
    pred = np.where(values >= 0.0, 1, -1)  # ties go to the positive class
    p2n = int(np.sum((gold == 1) & (pred == -1)))
    n2p = int(np.sum((gold == -1) & (pred == 1)))
    return EvalReport.from_counts(environment, len(samples), p2n, n2p)


def ood_suite(
    decision,
    spec: FeatureSpec,
    shifts: Sequence[OODShift],
    n: int,
    seed: int,
) -> list[EvalReport]:
    """Evaluate unshifted plus one fresh dataset per correlated-mean shift."""
    reports = [
        evaluate(
            decision,
            sample_dataset(spec, n, derive_seed(seed, 0)),
            IN_DISTRIBUTION,
        )
    ]
    for i, shift in enumerate(shifts):
        shifted = make_ood_spec(spec, shift)
        data = sample_dataset(shifted, n, derive_seed(seed, i + 1), Environment.OOD)
        reports.append(evaluate(decision, data, shift.name))
    return reports


def myopia_profile(decision, block_dims: Sequence[int]) -> MyopiaProfile:
    """Block norms of a decision vector plus the two myopia ratios."""
    weights = decision.weights if isinstance(decision, LinearClassifier) else decision
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    d_e, d_u, d_r = (int(d) for d in block_dims)
    if w.shape[0] != d_e + d_u + d_r:
        raise ValidationError(
            f"decision vector length {w.shape[0]} does not match block dims "
            f"{(d_e, d_u, d_r)}"
        )
    norm_e = float(np.linalg.norm(w[:d_e]))
    norm_u = float(np.linalg.norm(w[d_e : d_e + d_u]))
    norm_r = float(np.linalg.norm(w[d_e + d_u :]))
    cos_ori, cos_cad = cosine_forms(norm_e**2, norm_u**2, norm_r**2)
    return MyopiaProfile(norm_e, norm_u, norm_r, cos_ori, cos_cad)


def asymmetric_flip_report(
    decision,
    spec: FeatureSpec,
    n: int,
    seed: int,
    flipped_label: int = 1,
) -> EvalReport:
    """Evaluate with the correlated mean flipped for one class only.

    Samples of ``flipped_label`` get their correlated block recentered from
    ``y * mu_r`` to ``-y * mu_r``; the other class is untouched. This induces
    an error-type asymmetry for classifiers with correlated-block weight. It
    is a heuristic analog of error-type breakdowns on real data, where the
    asymmetry has a linguistic mechanism this model cannot represent.
    """
    if flipped_label not in (-1, 1):
        raise ValidationError("flipped_label must be -1 or +1")
    samples = sample_dataset(spec, n, seed, Environment.OOD)
    _, _, s_r = spec.slices()
    shift = 2.0 * flipped_label * spec.mu_correlated
    for sample in samples:
        if sample.label == flipped_label:
            sample.features[s_r] -= shift
    return evaluate(decision, samples, f"flip_correlated_label_{flipped_label:+d}")


# ---------------------------------------------------------------------------
# Experiment grids
# ---------------------------------------------------------------------------

ABLATION_VARIANTS = ("ecf", "no_irm", "no_ocd", "cad_only")


def _variant_config(variant: str, config: TrainConfig, seed: int) -> TrainConfig:
    if variant == "ecf":
        return replace(config, seed=seed)
    if variant == "no_irm":
        return replace(config, alpha=0.0, seed=seed)
    if variant == "no_ocd":
        return replace(config, beta=0.0, seed=seed)
    if variant == "cad_only":
        return replace(config, alpha=0.0, beta=0.0, seed=seed)
    raise ValidationError(f"unknown variant {variant!r}")


def _model_row(
    variant: str,
    shift_name: str,
    seed: int,
    model: ModelParams,
    report: EvalReport,
    block_dims: tuple[int, int, int],
) -> dict:
    profile = myopia_profile(effective_linear_map(model), block_dims)
    return {
        "variant": variant,
        "shift": shift_name,
        "seed": seed,
        "accuracy": report.accuracy,
        "err_p2n": report.errors_pos_to_neg,
        "err_n2p": report.errors_neg_to_pos,
        "norm_e": profile.norm_edited,
        "norm_u": profile.norm_unedited,
        "norm_r": profile.norm_correlated,
    }


def ablation_grid(
    paired_data: PairedDataset,
    config: TrainConfig,
    ood_spec: FeatureSpec,
    seeds: Sequence[int],
    n_eval: int = 10_000,
    shift_name: str = "flip_correlated",
) -> list[dict]:
    """Train the four constraint variants per seed and evaluate on ood_spec.

    Variants: full objective, alpha=0, beta=0, and alpha=beta=0. All four
    share the same training data; each seed contributes one evaluation
    dataset shared across variants. One row per (seed, variant).
    """
    if not seeds:
        raise ValidationError("seeds must be nonempty")
    block_dims = paired_data.spec.block_dims
    rows = []
    for seed in seeds:
        eval_data = sample_dataset(
            ood_spec, n_eval, derive_seed(seed, 0), Environment.OOD
        )
        for variant in ABLATION_VARIANTS:
            model, _ = train_ecf(paired_data, _variant_config(variant, config, seed))
            report = evaluate(model, eval_data, shift_name)
            rows.append(
                _model_row(variant, shift_name, seed, model, report, block_dims)
            )
    return rows


def data_efficiency_curve(
    spec: FeatureSpec,
    pair_counts: Sequence[int],
    config: TrainConfig,
    seeds: Sequence[int],
    alignment_noise_sd: float = 0.0,
    n_eval: int = 10_000,
    shift: OODShift | None = None,
) -> list[dict]:
    """Compare paired training against equal-sentence-count original data.

    For each size m and seed: train the full objective on m pairs, train
    prediction-only (alpha=beta=0) on 2m original sentences, and evaluate
    both on one shared shifted dataset. One row per (size, seed, arm).
    """
    if not pair_counts:
        raise ValidationError("pair_counts must be nonempty")
    if not seeds:
        raise ValidationError("seeds must be nonempty")
    shift = shift if shift is not None else OODShift.flip()
    eval_spec = make_ood_spec(spec, shift)
    rows = []
    for size_idx, m in enumerate(pair_counts):
        for seed in seeds:
            base = 4 * size_idx
            paired = make_paired_dataset(
                spec, m, alignment_noise_sd, derive_seed(seed, base)
            )
            originals = sample_dataset(spec, 2 * m, derive_seed(seed, base + 1))
            eval_data = sample_dataset(
                eval_spec, n_eval, derive_seed(seed, base + 2), Environment.OOD
            )
            cad_model, _ = train_ecf(paired, replace(config, seed=seed))
            orig_model, _ = train_unpaired(
                originals, replace(config, alpha=0.0, beta=0.0, seed=seed)
            )
            for variant, model in (
                ("cad_pairs", cad_model),
                ("original_only", orig_model),
            ):
                report = evaluate(model, eval_data, shift.name)
                row = _model_row(
                    variant, shift.name, seed, model, report, spec.block_dims
                )
                row["size"] = m
                rows.append(row)
    return rows


def mean_by(rows: Sequence[dict], group_keys: Sequence[str], value_key: str) -> dict:
    """Group rows by keys and average one numeric column (seed means)."""
    sums: dict[tuple, list[float]] = {}
    for row in rows:
        key = tuple(row[k] for k in group_keys)
        sums.setdefault(key, []).append(float(row[value_key]))
    return {key: sum(vals) / len(vals) for key, vals in sums.items()}
