from .importance import DEFAULT_EPSILON, ImportanceVector, PointImportance, normalize_min_max
from .trajectory import (
    BoundingBox,
    FlatPoints,
    IssueKind,
    Point,
    SimplifiedDatabase,
    Trajectory,
    TrajectoryDatabase,
    ValidationIssue,
    ValidationReport,
    compute_budget,
    pad_with_endpoints,
    validate_database,
)

__all__ = [
    "DEFAULT_EPSILON",
    "BoundingBox",
    "FlatPoints",
    "ImportanceVector",
    "IssueKind",
    "Point",
    "PointImportance",
    "SimplifiedDatabase",
    "Trajectory",
    "TrajectoryDatabase",
    "ValidationIssue",
    "ValidationReport",
    "compute_budget",
    "normalize_min_max",
    "pad_with_endpoints",
    "validate_database",
]
