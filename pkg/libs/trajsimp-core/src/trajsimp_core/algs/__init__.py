from .baselines import (
    BaselineMethod,
    BaselineSpec,
    allocate_budgets,
    bottom_up,
    run_baseline,
    top_down,
    top_down_whole,
    uniform_sample,
)
from .distance import (
    ErrorKind,
    Projection,
    anchor_segments,
    chord_errors,
    dad,
    edr,
    ped,
    point_errors,
    sed,
    simplification_error,
    subsequence_indices,
)
from .queries import (
    ClusteringQuery,
    GridIndex,
    KnnQuery,
    QueryEngine,
    QueryResult,
    RangeQuery,
    SimilarityQuery,
    build_index,
    cluster,
    knn_query,
    range_query,
    range_query_scan,
    similarity_query,
)
from .sampling import top_m, weighted_sample
from .workload import (
    Distribution,
    QueryQualityReport,
    QueryType,
    QueryWorkload,
    WorkloadSpec,
    evaluate_suite,
    f1_clustering,
    f1_query,
    generate_workload,
)

__all__ = [
    # Distances and errors
    "ErrorKind",
    "Projection",
    "anchor_segments",
    "chord_errors",
    "dad",
    "edr",
    "ped",
    "point_errors",
    "sed",
    "simplification_error",
    "subsequence_indices",
    # Queries
    "ClusteringQuery",
    "GridIndex",
    "KnnQuery",
    "QueryEngine",
    "QueryResult",
    "RangeQuery",
    "SimilarityQuery",
    "build_index",
    "cluster",
    "knn_query",
    "range_query",
    "range_query_scan",
    "similarity_query",
    # Workloads
    "Distribution",
    "QueryQualityReport",
    "QueryType",
    "QueryWorkload",
    "WorkloadSpec",
    "evaluate_suite",
    "f1_clustering",
    "f1_query",
    "generate_workload",
    # Baselines and sampling
    "BaselineMethod",
    "BaselineSpec",
    "allocate_budgets",
    "bottom_up",
    "run_baseline",
    "top_down",
    "top_down_whole",
    "uniform_sample",
    "top_m",
    "weighted_sample",
]
