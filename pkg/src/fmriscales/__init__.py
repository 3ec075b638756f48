"""Two-scale analysis of fMRI ROI time series.

Local scale: phase-space embedding and recurrence quantification per ROI.
Global scale: partial-correlation graphs per brain network with eigen and
degree features.  Both feed a bagged decision-tree classifier evaluated by
stratified cross-validation.
"""

from ._version import __version__
from .classify import (
    BaggedTreeClassifier,
    DecisionTree,
    FeatureTable,
    MetricsReport,
    cross_validate,
    fit_ensemble,
    fit_tree,
    metrics,
)
from .connectivity import (
    BrainGraph,
    ConnectivityEigenFeaturizer,
    DegreeRanking,
    EigenFeatures,
    build_graph,
    degree_and_rank,
    eigen_features,
    partial_correlation,
    precision_matrix,
    sample_covariance,
    top_roi_frequency,
)
from .data import (
    CohortDataset,
    RoiTimeSeries,
    Subject,
    ValidationReport,
    VoxelBlock,
    load_cohort,
    validate_dataset,
    write_cohort,
)
from .embedding import (
    CaoCurve,
    EmbeddingParams,
    cao_curves,
    choose_dimension,
    embed_series,
    embedding_params,
    select_delay,
)
from .networks import NETWORK_NAMES, NETWORK_ROI_COUNTS, TOTAL_ROIS
from .pipeline import PipelineConfig, load_config, report, run_pipeline
from .recurrence import (
    BinaryRecurrence,
    RecurrenceFeaturizer,
    RqaFeatures,
    recurrence_matrix,
    render_grayscale,
    resize_bilinear,
    rqa_measures,
    threshold,
)
from .reho import RehoMap, kcc, rank_transform, reho_map, select_representative
from .synth import (
    GeneratorSpec,
    gen_cohort_from_precision,
    gen_signal,
    gen_two_class_cohort,
    hub_precision,
)
