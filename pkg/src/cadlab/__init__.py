"""cadlab: a synthetic-data laboratory for counterfactually-augmented data.

The package generates Gaussian block-feature "sentences" with counterfactual
pairs, derives the Fisher-discriminant closed forms that exhibit the myopia
of pair-trained classifiers, trains a linear encoder/classifier with
invariance and pair-alignment penalties, and evaluates everything under
correlated-feature distribution shifts.
"""

from .errors import (
    CadLabError,
    DegenerateGeometryError,
    DivergenceError,
    InsufficientDataError,
    SingularScatterError,
    ValidationError,
)
from .evaluation import (
    EvalReport,
    MyopiaProfile,
    ablation_grid,
    asymmetric_flip_report,
    data_efficiency_curve,
    evaluate,
    myopia_profile,
    ood_suite,
)
from .features import (
    Environment,
    FeatureSpec,
    OODShift,
    PairedDataset,
    Sample,
    augment_counterfactual,
    dataset_to_csv,
    make_ood_spec,
    make_paired_dataset,
    sample_dataset,
    spec_from_dict,
    spec_from_file,
    spec_to_dict,
    spec_to_file,
)
from .fisher import (
    LinearClassifier,
    classifier_from_file,
    classifier_to_file,
    closed_form_cad,
    closed_form_ori,
    closed_form_rob,
    cosine_interpolated,
    cosine_to_robust,
    fld_fit,
    interpolate,
    misaligned_cad_block,
    optimal_lambda,
)
from .presets import get_preset, hard_spec, reference_spec
from .seeds import derive_seed
from .training import (
    LossBreakdown,
    ModelParams,
    TrainConfig,
    TrainHistory,
    effective_linear_map,
    irm_penalty,
    ocd_penalty,
    predict_label,
    predict_proba,
    prediction_loss,
    risk_scale_derivative,
    total_loss,
    train_ecf,
    train_unpaired,
)

__version__ = "0.1.0"
