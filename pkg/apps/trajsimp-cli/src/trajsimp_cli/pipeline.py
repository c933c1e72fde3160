"""
End-to-end simplification and evaluation.

Simplification predicts GNN-TS importance for every point, normalizes it over the whole
database, blends in query-based importance from a synthetic range workload and then draws the
global point budget in one pass, or within each trajectory at its proportional share.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from trajsimp_core._compat import Self

import numpy as np
from pydantic import BaseModel, Field
from trajsimp_core.algs.baselines import allocate_budgets
from trajsimp_core.algs.distance import ErrorKind, Projection, point_errors, subsequence_indices
from trajsimp_core.algs.queries import GridIndex, RangeQuery, build_index, range_result_points
from trajsimp_core.algs.sampling import top_m, weighted_sample
from trajsimp_core.algs.workload import (
    QueryQualityReport,
    QueryType,
    QueryWorkload,
    WorkloadSpec,
    evaluate_suite,
    generate_workload,
)
from trajsimp_core.exceptions import ContractError, InvalidArgumentError
from trajsimp_core.models.gnn_ts import ImportanceModel
from trajsimp_core.schemas.importance import ImportanceVector
from trajsimp_core.schemas.trajectory import (
    BoundingBox,
    SimplifiedDatabase,
    TrajectoryDatabase,
    compute_budget,
)

from .config import PipelineConfig, SamplingMode, SelectionScope

logger = logging.getLogger(__name__)


# ============================================================================
# Query-based adjustment
# ============================================================================


def _axis_cells(values: np.ndarray, low: float, high: float, count: int) -> np.ndarray:
    if high <= low:
        return np.zeros(len(values), dtype=np.int64)
    scaled = np.floor((np.asarray(values, dtype=np.float64) - low) / (high - low) * count)
    return np.clip(scaled, 0, count - 1).astype(np.int64)


def _grid_cells(
    box: BoundingBox, shape: tuple[int, int, int], x: np.ndarray, y: np.ndarray, t: np.ndarray
) -> np.ndarray:
    nx, ny, nt = shape
    cx = _axis_cells(x, box.x_min, box.x_max, nx)
    cy = _axis_cells(y, box.y_min, box.y_max, ny)
    ct = _axis_cells(t, box.t_min, box.t_max, nt)
    return (cx * ny + cy) * nt + ct


@dataclass(frozen=True)
class AdjustmentGrid:
    """
    Coarse (lon, lat, t) grid over a database's extent.

    ``point_cells`` holds the flat cell id of every database point in database order; points
    on the upper boundary fall into the last cell of each axis.
    """

    box: BoundingBox
    shape: tuple[int, int, int]
    point_cells: np.ndarray

    @classmethod
    def build(cls, db: TrajectoryDatabase, nx: int = 10, ny: int = 10, nt: int = 8) -> Self:
        if min(nx, ny, nt) < 1:
            raise InvalidArgumentError(f"Grid needs a cell per axis, got {nx}x{ny}x{nt}")
        box = db.bounding_box()
        flat = db.flat
        shape = (nx, ny, nt)
        cells = _grid_cells(box, shape, flat.x, flat.y, flat.t)
        return cls(box=box, shape=shape, point_cells=cells)

    @property
    def size(self) -> int:
        nx, ny, nt = self.shape
        return nx * ny * nt

    def cell_of(self, x: np.ndarray, y: np.ndarray, t: np.ndarray) -> np.ndarray:
        return _grid_cells(self.box, self.shape, x, y, t)


def query_importance(
    db: TrajectoryDatabase, workload: QueryWorkload, grid: AdjustmentGrid, index: GridIndex
) -> np.ndarray:
    """
    Per-cell query importance: 1 for cells holding a result point of any query, else 0.

    Cell values are divided by their maximum, which leaves 0/1 hits unchanged.
    """
    if workload.spec.query_type is not QueryType.RANGE:
        raise InvalidArgumentError(
            f"Adjustment needs range queries, got {workload.spec.query_type}"
        )
    cells = np.zeros(grid.size, dtype=np.float64)
    for query in workload.queries:
        if not isinstance(query, RangeQuery):
            raise ContractError(f"Range workload holds a {type(query).__name__}")
        cells[grid.point_cells[range_result_points(db, index, query)]] = 1.0
    peak = cells.max(initial=0.0)
    return cells / peak if peak > 0 else cells


def adjust_importance(
    importance: ImportanceVector,
    db: TrajectoryDatabase,
    workload: QueryWorkload,
    grid: AdjustmentGrid,
    delta: float,
    index: GridIndex | None = None,
) -> ImportanceVector:
    """
    Blend normalized importance with the query importance of each point's cell.

    ``adjusted = (1 - delta) * normalized + delta * cell_importance``; ``delta = 0`` returns the
    normalized importance unchanged and ``delta = 1`` returns the cell importance.

    Raises:
        InvalidArgumentError: If ``delta`` is outside [0, 1] or the workload is not range queries.
    """
    if not 0.0 <= delta <= 1.0:
        raise InvalidArgumentError(f"Adjustment ratio {delta} not in [0, 1]")
    if len(importance) != db.total_points:
        raise ContractError(f"Importance covers {len(importance)} of {db.total_points} points")
    if index is None:
        index = build_index(db)
    point_query = query_importance(db, workload, grid, index)[grid.point_cells]
    adjusted = (1.0 - delta) * importance.flat_normalized() + delta * point_query
    hit = int(np.count_nonzero(point_query))
    logger.info(f"Query adjustment (delta={delta}): {hit} of {db.total_points} points in hit cells")
    return importance.with_adjusted(adjusted)


# ============================================================================
# Selection
# ============================================================================


def select_points(
    db: TrajectoryDatabase,
    weights: np.ndarray,
    cr: float,
    sampling: SamplingMode = SamplingMode.WEIGHTED,
    seed: int = 0,
    scope: SelectionScope = SelectionScope.DATABASE,
) -> SimplifiedDatabase:
    """
    Keep exactly ``compute_budget(total, cr)`` points chosen by ``weights``.

    With ``DATABASE`` scope one draw covers every point and the choice is regrouped into
    per-trajectory subsequences. With ``TRAJECTORY`` scope the budget is first split in
    proportion to trajectory lengths (as the per-trajectory baselines do) and each trajectory
    draws its share from its own weights, in database order from one generator.
    """
    if len(weights) != db.total_points:
        raise ContractError(f"Weights cover {len(weights)} of {db.total_points} points")
    budget = compute_budget(db.total_points, cr)
    rng = np.random.default_rng(seed)

    def draw(w: np.ndarray, m: int) -> np.ndarray:
        match sampling:
            case SamplingMode.WEIGHTED:
                return weighted_sample(w, m, rng)
            case SamplingMode.TOP_M:
                return top_m(w, m)

    match scope:
        case SelectionScope.DATABASE:
            locations = db.point_locations()[draw(weights, budget)]
            counts = np.bincount(locations[:, 0], minlength=len(db))
            retained = np.split(locations[:, 1], np.cumsum(counts)[:-1])
        case SelectionScope.TRAJECTORY:
            shares = allocate_budgets(db.lengths, budget)
            per_trajectory = np.split(np.asarray(weights), np.cumsum(db.lengths)[:-1])
            retained = [draw(w, int(m)) for w, m in zip(per_trajectory, shares, strict=True)]
    return SimplifiedDatabase.from_selection(db, retained, cr)


def score_database(
    db: TrajectoryDatabase, model: ImportanceModel, config: PipelineConfig
) -> ImportanceVector:
    """GNN-TS importance for ``db``, query-adjusted when ``simplify.delta > 0``."""
    importance = model.predict_database(db, max_workers=config.simplify.max_workers)
    delta = config.simplify.delta
    if delta == 0.0:
        return importance
    workload = generate_workload(db, config.adjustment_spec())
    grid = AdjustmentGrid.build(
        db, config.workload.grid_x, config.workload.grid_y, config.workload.grid_t
    )
    index = build_index(db, config.index.spatial_cell_m, config.index.temporal_cell_s)
    return adjust_importance(importance, db, workload, grid, delta, index)


def simplify(
    db: TrajectoryDatabase, model: ImportanceModel, config: PipelineConfig
) -> SimplifiedDatabase:
    """
    Simplify ``db`` to the configured compression rate.

    Deterministic for a fixed configuration. When the budget covers every point the identity
    simplification is returned without running the model.
    """
    cr = config.simplify.cr
    budget = compute_budget(db.total_points, cr)
    if budget == db.total_points:
        return SimplifiedDatabase.identity(db)
    importance = score_database(db, model, config)
    simplified = select_points(
        db,
        importance.flat_adjusted(),
        cr,
        config.simplify.sampling,
        config.simplify.seed,
        config.simplify.scope,
    )
    logger.info(
        f"Kept {simplified.retained_count} of {db.total_points} points "
        f"({config.simplify.sampling} per {config.simplify.scope}, cr={cr})"
    )
    return simplified


def recover_simplification(
    original: TrajectoryDatabase, simplified: TrajectoryDatabase
) -> SimplifiedDatabase:
    """
    Rebuild the index view of a simplified database read back from disk.

    Trajectories missing from ``simplified`` kept no points.

    Raises:
        ContractError: If a simplified trajectory is unknown or not a subsequence of its original.
    """
    unknown = set(simplified.ids) - set(original.ids)
    if unknown:
        raise ContractError(f"Simplified trajectories not in the original: {sorted(unknown)[:5]}")
    by_id = simplified.by_id
    retained = [
        subsequence_indices(traj, by_id[traj.id]) if traj.id in by_id else np.zeros(0, np.int64)
        for traj in original
    ]
    count = sum(r.size for r in retained)
    # an empty selection is recorded at the smallest positive rate
    rate = max(count, 1) / max(original.total_points, 1)
    return SimplifiedDatabase(original=original, retained=tuple(retained), compression_rate=rate)


# ============================================================================
# Evaluation
# ============================================================================


class ErrorSummary(BaseModel):
    mean: float = Field(description="Mean over trajectories of the per-trajectory maximum")
    max: float = Field(description="Largest per-trajectory maximum")


class EvaluationReport(BaseModel):
    """Query quality and geometric error of one simplified database."""

    compression_rate: float = Field(description="Retained points over original points")
    retained_points: int = Field(description="Points kept")
    total_points: int = Field(description="Points in the original database")
    mean_f1: dict[QueryType, float] = Field(default_factory=dict, description="Mean F1 per type")
    query_count: dict[QueryType, int] = Field(default_factory=dict, description="Queries per type")
    errors: dict[ErrorKind, ErrorSummary] = Field(
        default_factory=dict, description="Simplification error per error kind, meters or radians"
    )

    def quality(self) -> QueryQualityReport:
        return QueryQualityReport(mean_f1=self.mean_f1, query_count=self.query_count)


def error_summary(
    simplified: SimplifiedDatabase, kind: ErrorKind, projection: Projection
) -> ErrorSummary:
    """
    Per-trajectory maximum error against the endpoint-padded selection, summarized.

    Trajectories of fewer than two points have no segments and are left out.
    """
    maxima = [
        float(point_errors(traj, retained, kind, projection).max(initial=0.0))
        for traj, retained in zip(simplified.original, simplified.with_endpoints(), strict=True)
        if len(traj) >= 2
    ]
    if not maxima:
        return ErrorSummary(mean=0.0, max=0.0)
    return ErrorSummary(mean=float(np.mean(maxima)), max=float(np.max(maxima)))


def evaluate(
    original: TrajectoryDatabase,
    simplified: SimplifiedDatabase,
    specs: Sequence[WorkloadSpec],
    error_kinds: Sequence[ErrorKind] = (ErrorKind.SED, ErrorKind.PED),
    max_workers: int = 1,
) -> EvaluationReport:
    """Mean F1 per query type over workloads drawn from ``original``, plus error summaries."""
    workloads = [generate_workload(original, spec) for spec in specs]
    quality = evaluate_suite(original, simplified, workloads, max_workers=max_workers)
    projection = Projection.for_database(original)
    return EvaluationReport(
        compression_rate=simplified.retained_count / original.total_points,
        retained_points=simplified.retained_count,
        total_points=original.total_points,
        mean_f1=quality.mean_f1,
        query_count=quality.query_count,
        errors={kind: error_summary(simplified, kind, projection) for kind in error_kinds},
    )


def render_table(report: EvaluationReport) -> str:
    """Plain-text table of an evaluation report."""
    lines = [
        f"Compression rate: {report.compression_rate:.4%} "
        f"({report.retained_points} of {report.total_points} points)",
        "",
        f"{'query type':<12} {'queries':>8} {'mean F1':>8}",
    ]
    for query_type, f1 in report.mean_f1.items():
        lines.append(f"{query_type:<12} {report.query_count.get(query_type, 0):>8} {f1:>8.4f}")
    if report.errors:
        lines += ["", f"{'error':<12} {'mean':>12} {'max':>12}"]
        for kind, summary in report.errors.items():
            lines.append(f"{kind:<12} {summary.mean:>12.3f} {summary.max:>12.3f}")
    return "\n".join(lines)
