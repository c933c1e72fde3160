from .exceptions import ErrorCategory, TrajSimpError
from .schemas import (
    ImportanceVector,
    SimplifiedDatabase,
    Trajectory,
    TrajectoryDatabase,
    compute_budget,
)

__all__ = [
    "ErrorCategory",
    "ImportanceVector",
    "SimplifiedDatabase",
    "TrajSimpError",
    "Trajectory",
    "TrajectoryDatabase",
    "compute_budget",
]
