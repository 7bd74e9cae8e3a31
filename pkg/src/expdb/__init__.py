"""expdb: a lifelong store for linked AI-experiment metadata with ranking,
variability statistics, and meta-learning recommendation built on top."""

from .errors import (
    ConflictError,
    ContractViolationError,
    ExpdbError,
    IntegrityError,
    InvalidInputError,
    InvalidStateError,
    MissingMetricError,
    NotFoundError,
    ValidationError,
)
from .metamodel import (
    CommonHeader,
    Column,
    DataSchema,
    Dataset,
    DatasetParameters,
    EnvironmentInfo,
    MetaFeatures,
    ObjectRef,
    ParameterSpec,
    Pipeline,
    PipelineParameters,
    PipelineStep,
    Run,
    SchemaEntry,
    SourceRef,
    Table,
    TargetSpec,
    TrainedPipeline,
    ValidationReport,
    check_param_values,
    document_from_dict,
    document_to_dict,
    extract_meta_features,
    infer_data_schema,
    validate_document,
    validate_rows,
)
from .metalearn import (
    Portfolio,
    RecommendationPlan,
    RegretCurve,
    ResultsMatrix,
    SourceComparison,
    Standardizer,
    build_greedy_portfolio,
    build_results_matrix,
    compare_sources,
    dataset_distance,
    evaluate_regret,
    knd_recommend,
)
from .metrics import (
    AggregateRow,
    Ranking,
    ResultRecord,
    aggregate_metric,
    majority_normalized_accuracy,
    normalized_accuracy,
    rank_entities,
    records_from_runs,
)
from .splitting import (
    SplitIndices,
    SplitMix64,
    make_holdout_split,
    make_stratified_folds,
    realize_split,
)
from .stats import (
    SignificanceSummary,
    TestResult,
    chi2_sf,
    friedman_test,
    normal_sf,
    variability_report,
    wilcoxon_signed_rank,
)
from .store import ArtifactKind, ArtifactStore, ExperimentKey, QueryFilter

__version__ = "0.1.0"
