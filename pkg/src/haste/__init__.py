"""Transferability estimation on hard subsets of target data.

Score how well pre-trained source models will transfer to a target dataset
without fine-tuning anything: compute per-sample hardness from model
representations, keep only the hardest slice of the target set, and
evaluate standard transferability metrics (LEEP, NCE, GBC, MS-LEEP,
E-LEEP) on that slice.
"""

from .bounds import (
    BoundReport,
    HeadFit,
    bound_report,
    fit_optimal_head,
    lower_bound_report,
    upper_bound_report,
)
from .evaluation import (
    CorrelationReport,
    ExperimentRecord,
    evaluate,
    format_report,
    kendall_tau,
    pearson,
    relative_improvement,
    summarize_improvements,
    weighted_kendall_tau,
)
from .hardness import (
    ClassGaussian,
    HardnessVector,
    augment_with_easy,
    bucketize,
    class_gaussians,
    hardness_class_agnostic,
    hardness_class_specific,
    normalize_per_layer,
    rank_by_hardness,
    select_hard_subset,
    similarity_matrix,
    subsample_source,
)
from .metrics import (
    EmpiricalJoint,
    MetricScore,
    dummy_labels,
    e_leep,
    empirical_joint,
    gbc,
    haste_score,
    leep,
    ms_leep,
    nce,
    union_subsets,
)
from .synthetic import SynthConfig, SynthExperiment, bucket_scores, synth_experiment
from .tensor_store import (
    EmbeddingSet,
    LabelVector,
    PredictionMatrix,
    SubsetIndex,
    read_embedding_set,
    read_labels,
    read_predictions,
    read_subset,
    read_tensor,
    write_labels,
    write_subset,
    write_tensor,
)

__version__ = "0.1.0"
