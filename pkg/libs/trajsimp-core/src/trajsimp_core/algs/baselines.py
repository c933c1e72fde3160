"""
Error-driven baseline simplifiers under a point budget.

Top-Down and Bottom-Up are the classic threshold algorithms recast as budgeted greedy
procedures; ``uniform_sample`` is the random control. Errors are measured in the database's
planar projection.
"""

from __future__ import annotations

import heapq
import logging
from trajsimp_core._compat import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import InvalidArgumentError
from ..schemas.trajectory import (
    SimplifiedDatabase,
    Trajectory,
    TrajectoryDatabase,
    compute_budget,
)
from .distance import PLANAR, ErrorKind, ProjectedTrajectory, Projection, chord_errors

logger = logging.getLogger(__name__)


class BaselineMethod(StrEnum):
    TOP_DOWN_E = "top_down_E"  # Top-Down per trajectory, proportional budgets
    TOP_DOWN_W = "top_down_W"  # Top-Down over the whole database
    BOTTOM_UP_E = "bottom_up_E"  # Bottom-Up per trajectory, proportional budgets
    UNIFORM = "uniform"


class BaselineSpec(BaseModel):
    """Which baseline to run and at which compression rate."""

    model_config = ConfigDict(frozen=True)

    method: BaselineMethod = Field(description="Baseline algorithm")
    error_kind: ErrorKind = Field(default=ErrorKind.PED, description="Error driving the greedy")
    compression_rate: float = Field(gt=0.0, le=1.0, description="Fraction of points retained")
    seed: int = Field(default=0, ge=0, description="Seed for the uniform baseline")


# ============================================================================
# Top-Down
# ============================================================================


def _split_candidate(
    traj: ProjectedTrajectory, start: int, end: int, kind: ErrorKind
) -> tuple[float, int] | None:
    """Worst error inside ``(start, end)`` and the index to split at, if splittable."""
    if end - start < 2:
        return None
    errors = chord_errors(traj, start, end, kind, strict=False)
    if kind is ErrorKind.DAD:
        # the heading error at ``start`` is fixed by splitting at its successor
        j = int(np.argmax(errors[:-1]))
        return float(errors[j]), max(start + j, start + 1)
    j = int(np.argmax(errors[1:-1]))
    return float(errors[1 + j]), start + 1 + j


def _top_down_indices(traj: ProjectedTrajectory, budget: int, kind: ErrorKind) -> np.ndarray:
    n = len(traj)
    if budget >= n:
        return np.arange(n, dtype=np.int64)
    retained = {0, n - 1}
    heap: list[tuple[float, int, int, int]] = []
    first = _split_candidate(traj, 0, n - 1, kind)
    if first is not None:
        heapq.heappush(heap, (-first[0], first[1], 0, n - 1))
    while len(retained) < budget and heap:
        _, split, start, end = heapq.heappop(heap)
        retained.add(split)
        for s, e in ((start, split), (split, end)):
            candidate = _split_candidate(traj, s, e, kind)
            if candidate is not None:
                heapq.heappush(heap, (-candidate[0], candidate[1], s, e))
    return np.array(sorted(retained), dtype=np.int64)


def _check_budget(budget: int) -> None:
    if budget < 2:
        raise InvalidArgumentError(f"Budget must be at least 2, got {budget}")


def top_down(
    traj: Trajectory, budget: int, kind: ErrorKind, projection: Projection = PLANAR
) -> Trajectory:
    """
    Budgeted Top-Down: keep the endpoints, then repeatedly split the segment with the worst
    point, inserting that point, until ``budget`` points are kept.

    Ties go to the lowest point index. A budget at or above the trajectory length returns the
    trajectory whole.
    """
    _check_budget(budget)
    return traj.take(_top_down_indices(projection.project(traj), budget, kind))


def top_down_whole(
    db: TrajectoryDatabase,
    budget: int,
    kind: ErrorKind,
    projection: Projection | None = None,
) -> SimplifiedDatabase:
    """
    Top-Down over the whole database with one global priority queue.

    Every trajectory starts from its endpoints; the globally worst split candidate is inserted
    until the database budget is met. Ties go to the earlier trajectory, then the lower index.

    Raises:
        InvalidArgumentError: If ``budget`` cannot cover every trajectory's endpoints.
    """
    if budget < 2 * len(db):
        raise InvalidArgumentError(
            f"Budget {budget} cannot keep the endpoints of {len(db)} trajectories"
        )
    total = db.total_points
    if budget >= total:
        return SimplifiedDatabase.identity(db)

    projection = projection or Projection.for_database(db)
    projected = [projection.project(t) for t in db]
    retained: list[set[int]] = []
    heap: list[tuple[float, int, int, int, int]] = []
    for pos, traj in enumerate(projected):
        n = len(traj)
        retained.append({0, n - 1} if n else set())
        candidate = _split_candidate(traj, 0, n - 1, kind) if n else None
        if candidate is not None:
            heapq.heappush(heap, (-candidate[0], pos, candidate[1], 0, n - 1))

    count = sum(len(r) for r in retained)
    while count < budget and heap:
        _, pos, split, start, end = heapq.heappop(heap)
        retained[pos].add(split)
        count += 1
        for s, e in ((start, split), (split, end)):
            candidate = _split_candidate(projected[pos], s, e, kind)
            if candidate is not None:
                heapq.heappush(heap, (-candidate[0], pos, candidate[1], s, e))

    return SimplifiedDatabase.from_selection(
        db, [np.array(sorted(r), dtype=np.int64) for r in retained], budget / total
    )


# ============================================================================
# Bottom-Up
# ============================================================================


def _bottom_up_indices(traj: ProjectedTrajectory, budget: int, kind: ErrorKind) -> np.ndarray:
    n = len(traj)
    if budget >= n:
        return np.arange(n, dtype=np.int64)
    prev = np.arange(-1, n - 1)
    nxt = np.arange(1, n + 1)
    alive = np.ones(n, dtype=bool)
    version = np.zeros(n, dtype=np.int64)

    def cost(i: int) -> float:
        return float(chord_errors(traj, int(prev[i]), int(nxt[i]), kind, strict=False).max())

    heap = [(cost(i), i, 0) for i in range(1, n - 1)]
    heapq.heapify(heap)
    remaining = n
    while remaining > budget and heap:
        _, i, v = heapq.heappop(heap)
        if not alive[i] or v != version[i]:
            continue
        alive[i] = False
        remaining -= 1
        left, right = int(prev[i]), int(nxt[i])
        nxt[left] = right
        prev[right] = left
        # neighbours' merged segments changed
        for j in (left, right):
            if 0 < j < n - 1:
                version[j] += 1
                heapq.heappush(heap, (cost(j), j, int(version[j])))
    return np.flatnonzero(alive).astype(np.int64)


def bottom_up(
    traj: Trajectory, budget: int, kind: ErrorKind, projection: Projection = PLANAR
) -> Trajectory:
    """
    Budgeted Bottom-Up: start from every point and repeatedly drop the interior point whose
    removal gives the smallest error against the merged segment.

    Removal cost is the worst error over the original points covered by the merged segment.
    Both neighbours are re-evaluated after each removal; ties go to the lowest index.
    """
    _check_budget(budget)
    return traj.take(_bottom_up_indices(projection.project(traj), budget, kind))


# ============================================================================
# Uniform sampling and budget allocation
# ============================================================================


def uniform_sample(db: TrajectoryDatabase, budget: int, seed: int) -> SimplifiedDatabase:
    """``budget`` points drawn uniformly without replacement from the whole database."""
    total = db.total_points
    if not 1 <= budget <= total:
        raise InvalidArgumentError(f"Budget {budget} outside [1, {total}]")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(total, size=budget, replace=False))
    flat = db.flat
    selection = [flat.index[chosen[flat.position[chosen] == pos]] for pos in range(len(db))]
    return SimplifiedDatabase.from_selection(db, selection, budget / total)


def allocate_budgets(lengths: np.ndarray, budget: int) -> np.ndarray:
    """
    Split ``budget`` across trajectories proportionally to their lengths.

    Floors the exact quotas, then hands the remainder to the largest fractional parts (ties to
    the earlier trajectory). No trajectory receives more than its length.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    total = int(lengths.sum())
    if not 0 <= budget <= total:
        raise InvalidArgumentError(f"Budget {budget} outside [0, {total}]")
    numerators = lengths * budget
    base = numerators // total
    remainders = numerators % total
    extra = budget - int(base.sum())
    order = np.argsort(-remainders, kind="stable")
    base[order[:extra]] += 1
    return base


def _per_trajectory(
    traj: ProjectedTrajectory, budget: int, method: BaselineMethod, kind: ErrorKind
) -> np.ndarray:
    n = len(traj)
    if budget >= n:
        return np.arange(n, dtype=np.int64)
    if budget == 0:
        return np.zeros(0, dtype=np.int64)
    if budget == 1:
        return np.zeros(1, dtype=np.int64)
    if method is BaselineMethod.TOP_DOWN_E:
        return _top_down_indices(traj, budget, kind)
    return _bottom_up_indices(traj, budget, kind)


def run_baseline(db: TrajectoryDatabase, spec: BaselineSpec) -> SimplifiedDatabase:
    """
    Simplify ``db`` with a baseline at ``compute_budget(total, spec.compression_rate)`` points.

    Per-trajectory methods receive proportional budgets from ``allocate_budgets``; a budget of
    one keeps the first point.
    """
    budget = compute_budget(db.total_points, spec.compression_rate)
    logger.info(
        f"Running {spec.method} ({spec.error_kind}) at cr={spec.compression_rate}: "
        f"{budget} of {db.total_points} points"
    )
    match spec.method:
        case BaselineMethod.UNIFORM:
            simplified = uniform_sample(db, budget, spec.seed)
        case BaselineMethod.TOP_DOWN_W:
            simplified = top_down_whole(db, budget, spec.error_kind)
        case BaselineMethod.TOP_DOWN_E | BaselineMethod.BOTTOM_UP_E:
            projection = Projection.for_database(db)
            budgets = allocate_budgets(db.lengths, budget)
            selection = [
                _per_trajectory(projection.project(t), int(b), spec.method, spec.error_kind)
                for t, b in zip(db, budgets, strict=True)
            ]
            simplified = SimplifiedDatabase.from_selection(db, selection)
        case _:
            raise InvalidArgumentError(f"Unknown baseline method: {spec.method}")
    return SimplifiedDatabase(
        original=simplified.original,
        retained=simplified.retained,
        compression_rate=spec.compression_rate,
    )
