"""One-versus-one multiclass labeling by calibrated pairwise coupling."""

from .calibration import (
    CalibrationFitData,
    FitOptions,
    apply_calibration,
    calibrate_matrix,
    fit_calibration,
    nll,
    platt_targets,
)
from .classifiers import (
    BinaryLinearClassifier,
    ClassifierSuite,
    LogisticHyper,
    MultiOutputModel,
    RefineHyper,
    load_external_scores,
    refine_ova_to_ovo,
    score_sample,
    train_binary_logistic,
    train_multioutput,
    train_pairwise_suite,
)
from .core import (
    CalibrationParams,
    ClassSet,
    CouplingWeights,
    LabeledDataset,
    PairwiseScoreMatrix,
    ProbabilityVector,
    mu,
    validate_scores,
)
from .coupling import (
    CouplingSolution,
    argmax_label,
    build_q,
    kl_objective,
    projected_gradient_coupling,
    quadratic_objective,
    solve_coupling,
    threshold_labels,
    vote_label,
)
from .evaluation import (
    BenchmarkConfig,
    accuracy,
    confusion_counts,
    gen_synthetic,
    metrics,
    run_benchmark,
)

__version__ = "0.1.0"
