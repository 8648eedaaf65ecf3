"""Training-trajectory analysis with Gaussian hidden Markov models.

Pipeline: checkpoint bundles -> per-checkpoint weight metrics -> per-seed
z-scored trajectories -> Gaussian HMM (state count by validation BIC) ->
pruned, annotated training map -> convergence regression and detour states.
"""

from .bundle import TensorRecord, WeightSnapshot, read_bundle, validate_manifest, write_bundle
from .errors import InputError, NumericalError, TrainmapError
from .hmm import (
    FitConfig,
    FitReport,
    GaussianHmm,
    InformationCriteria,
    SelectionTable,
    baum_welch,
    forward_filter,
    information_criteria,
    kmeans_baseline,
    log_emission,
    model_from_json,
    model_to_json,
    sample,
    select_model,
    viterbi,
)
from .metrics import (
    METRIC_NAMES,
    MetricVector,
    MissingBiasWarning,
    compute_metrics,
    read_metrics_csv,
    singular_values,
    write_metrics_csv,
)
from .semantics import (
    DetourReport,
    RegressionResult,
    StateDistribution,
    convergence_time,
    detect_detours,
    dissimilarity,
    fit_regression,
    unigram_features,
)
from .training_map import (
    TrainingMap,
    annotate_edges,
    export_map,
    map_from_json,
    posterior_gradient,
    prune_transitions,
)
from .trajectory import (
    NormalizedTrajectory,
    NormStats,
    Trajectory,
    build_trajectory,
    group_by_seed,
    normalize,
    select_features,
)

__version__ = "0.1.0"
