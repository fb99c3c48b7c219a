"""Learnable confidence-tensor fusion for small classifier ensembles.

A k-learner, c-class ensemble votes through one-hot stacked predictions;
a c-by-kc confidence matrix (k square slices side by side) turns those
votes into class evidence.  The matrix starts as accuracy-weighted voting
and is trained by plain gradient descent on a margin-augmented
cross-entropy whose gradient provably never changes the column sums, so
the per-classifier confidence budget constraint survives training without
projection.
"""

from .data import (
    DataError,
    LabeledDataset,
    SplitDataset,
    generate_blobs,
    generate_double_ring,
    load_csv,
    load_external_predictions,
    save_csv,
    save_external_predictions,
    split,
)
from .experiment import (
    ComparisonReport,
    ConfigError,
    MethodScore,
    Prepared,
    RunConfig,
    SliceDiagnostics,
    compare,
    emit_convergence,
    evaluate,
    inspect_slices,
    prepare,
    render_report_csv,
    render_report_text,
    run_experiment,
    train_tensor,
)
from .learners import (
    BaggedEnsemble,
    DecisionTree,
    fit_bagged,
    fit_tree,
    load_ensemble,
    majority_vote,
    save_ensemble,
    stack_predictions,
    weighted_vote,
)
from .lossgrad import Batch, LossParams, gradient, loss, sample_margin
from .optimizer import (
    DivergenceError,
    OptimizerConfig,
    TrainReport,
    select_batch,
    step,
    train,
)
from .tensor import (
    ClassifierWeights,
    ConfidenceTensor,
    StackedPrediction,
    expand_weights,
    fuse,
    init_confidence_tensor,
    load_tensor,
    predict,
    save_tensor,
)

__version__ = "0.1.0"

__all__ = [
    "BaggedEnsemble",
    "Batch",
    "ClassifierWeights",
    "ComparisonReport",
    "ConfidenceTensor",
    "ConfigError",
    "DataError",
    "DecisionTree",
    "DivergenceError",
    "LabeledDataset",
    "LossParams",
    "MethodScore",
    "OptimizerConfig",
    "Prepared",
    "RunConfig",
    "SliceDiagnostics",
    "SplitDataset",
    "StackedPrediction",
    "TrainReport",
    "compare",
    "emit_convergence",
    "evaluate",
    "expand_weights",
    "fit_bagged",
    "fit_tree",
    "fuse",
    "generate_blobs",
    "generate_double_ring",
    "gradient",
    "init_confidence_tensor",
    "inspect_slices",
    "load_csv",
    "load_ensemble",
    "load_external_predictions",
    "load_tensor",
    "loss",
    "majority_vote",
    "predict",
    "prepare",
    "render_report_csv",
    "render_report_text",
    "run_experiment",
    "train_tensor",
    "sample_margin",
    "save_csv",
    "save_ensemble",
    "save_external_predictions",
    "save_tensor",
    "select_batch",
    "split",
    "stack_predictions",
    "step",
    "train",
    "weighted_vote",
]
