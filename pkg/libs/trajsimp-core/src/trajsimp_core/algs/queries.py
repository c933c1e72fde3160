"""Spatio-temporal grid index and range / kNN / similarity / clustering queries."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InvalidArgumentError
from ..schemas.trajectory import Trajectory, TrajectoryDatabase
from .distance import DEFAULT_EDR_THRESHOLD_M, Projection, edr_planar

logger = logging.getLogger(__name__)

# Index cell defaults
DEFAULT_SPATIAL_CELL_M = 500.0
DEFAULT_TEMPORAL_CELL_S = 3_600.0

# Similarity-query interpolation step, seconds
DEFAULT_TICK_S = 60.0

# Clustering link threshold, EDR edit count
DEFAULT_LINK_THRESHOLD = 5

CellKey = tuple[int, int, int]
Partition = tuple[frozenset[str], ...]


# ============================================================================
# Query types
# ============================================================================


@dataclass(frozen=True)
class RangeQuery:
    """Closed spatio-temporal box in degrees and epoch seconds."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    t_min: float
    t_max: float

    def __post_init__(self) -> None:
        if not (self.x_min <= self.x_max and self.y_min <= self.y_max and self.t_min <= self.t_max):
            raise InvalidArgumentError(f"Inverted range query box: {self}")


@dataclass(frozen=True)
class KnnQuery:
    k: int
    query: Trajectory
    t_start: float
    t_end: float

    def __post_init__(self) -> None:
        if self.k < 1:
            raise InvalidArgumentError(f"k must be at least 1, got {self.k}")
        if self.t_start > self.t_end:
            raise InvalidArgumentError(f"Inverted time window [{self.t_start}, {self.t_end}]")


@dataclass(frozen=True)
class SimilarityQuery:
    query: Trajectory
    t_start: float
    t_end: float
    delta: float  # distance bound, meters

    def __post_init__(self) -> None:
        if self.delta <= 0:
            raise InvalidArgumentError(f"Similarity bound must be positive, got {self.delta}")
        if self.t_start > self.t_end:
            raise InvalidArgumentError(f"Inverted time window [{self.t_start}, {self.t_end}]")


@dataclass(frozen=True)
class ClusteringQuery:
    """Cluster every trajectory restricted to ``[t_start, t_end]``."""

    t_start: float
    t_end: float
    edr_threshold: float = DEFAULT_EDR_THRESHOLD_M
    link_threshold: int = DEFAULT_LINK_THRESHOLD

    def __post_init__(self) -> None:
        if self.t_start > self.t_end:
            raise InvalidArgumentError(f"Inverted time window [{self.t_start}, {self.t_end}]")


Query = RangeQuery | KnnQuery | SimilarityQuery | ClusteringQuery


@dataclass(frozen=True)
class QueryResult:
    """Trajectory ids answering a query; kNN results also keep their ranking."""

    ids: frozenset[str]
    ranking: tuple[str, ...] = ()
    short: bool = False  # fewer than k kNN candidates existed

    def __len__(self) -> int:
        return len(self.ids)


# ============================================================================
# Grid index
# ============================================================================


@dataclass
class GridIndex:
    """
    Uniform spatio-temporal grid over planar meters and seconds.

    ``cells`` maps a cell key to the flat offsets (into ``db.flat``) of the points inside it.
    """

    projection: Projection
    spatial_cell: float
    temporal_cell: float
    point_count: int
    cells: dict[CellKey, np.ndarray] = field(default_factory=dict)

    def cell_of(self, x: float, y: float, t: float) -> CellKey:
        px, py = self.projection.forward(x, y)
        return (
            math.floor(float(px) / self.spatial_cell),
            math.floor(float(py) / self.spatial_cell),
            math.floor(t / self.temporal_cell),
        )

    def _cell_coords(
        self, x: np.ndarray, y: np.ndarray, t: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        px, py = self.projection.forward(x, y)
        return (
            np.floor(px / self.spatial_cell).astype(np.int64),
            np.floor(py / self.spatial_cell).astype(np.int64),
            np.floor(t / self.temporal_cell).astype(np.int64),
        )

    def __len__(self) -> int:
        return self.point_count

    def candidates(self, q: RangeQuery) -> np.ndarray:
        """Flat offsets of every point in a cell intersecting the query box."""
        lo = self.cell_of(q.x_min, q.y_min, q.t_min)
        hi = self.cell_of(q.x_max, q.y_max, q.t_max)
        span = [h - low + 1 for low, h in zip(lo, hi, strict=True)]
        hits: list[np.ndarray] = []
        if math.prod(span) > len(self.cells):
            for key, offsets in self.cells.items():
                if all(low <= k <= h for low, k, h in zip(lo, key, hi, strict=True)):
                    hits.append(offsets)
        else:
            for cx in range(lo[0], hi[0] + 1):
                for cy in range(lo[1], hi[1] + 1):
                    for ct in range(lo[2], hi[2] + 1):
                        offsets = self.cells.get((cx, cy, ct))
                        if offsets is not None:
                            hits.append(offsets)
        return np.concatenate(hits) if hits else np.zeros(0, dtype=np.int64)


def build_index(
    db: TrajectoryDatabase,
    spatial_cell: float = DEFAULT_SPATIAL_CELL_M,
    temporal_cell: float = DEFAULT_TEMPORAL_CELL_S,
    projection: Projection | None = None,
) -> GridIndex:
    """
    Index every point of ``db``; an empty database yields an empty index.

    Raises:
        InvalidArgumentError: If a cell size is not positive.
    """
    if spatial_cell <= 0 or temporal_cell <= 0:
        raise InvalidArgumentError(
            f"Cell sizes must be positive, got {spatial_cell} m / {temporal_cell} s"
        )
    projection = projection or Projection.for_database(db)
    index = GridIndex(
        projection=projection,
        spatial_cell=spatial_cell,
        temporal_cell=temporal_cell,
        point_count=db.total_points,
    )
    if db.total_points == 0:
        return index

    flat = db.flat
    cx, cy, ct = index._cell_coords(flat.x, flat.y, flat.t.astype(np.float64))
    keys = np.column_stack([cx, cy, ct])
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    bounds = np.cumsum(np.bincount(inverse, minlength=len(unique)))[:-1]
    for key, offsets in zip(unique, np.split(order, bounds), strict=True):
        index.cells[(int(key[0]), int(key[1]), int(key[2]))] = offsets.astype(np.int64)

    logger.debug(f"Indexed {db.total_points} points into {len(index.cells)} cells")
    return index


# ============================================================================
# Range queries
# ============================================================================


def _inside(db: TrajectoryDatabase, offsets: np.ndarray, q: RangeQuery) -> np.ndarray:
    flat = db.flat
    x, y, t = flat.x[offsets], flat.y[offsets], flat.t[offsets]
    mask = (
        (x >= q.x_min) & (x <= q.x_max) & (y >= q.y_min) & (y <= q.y_max)
        & (t >= q.t_min) & (t <= q.t_max)
    )
    return offsets[mask]


def _result_from_offsets(db: TrajectoryDatabase, offsets: np.ndarray) -> QueryResult:
    positions = np.unique(db.flat.position[offsets])
    ids = db.ids
    return QueryResult(ids=frozenset(ids[int(p)] for p in positions))


def range_query(db: TrajectoryDatabase, index: GridIndex, q: RangeQuery) -> QueryResult:
    """Trajectories with at least one point inside the closed box, via the grid index."""
    if index.point_count != db.total_points:
        raise InvalidArgumentError("Index was built for a different database")
    return _result_from_offsets(db, _inside(db, index.candidates(q), q))


def range_query_scan(db: TrajectoryDatabase, q: RangeQuery) -> QueryResult:
    """Linear-scan reference for ``range_query``."""
    return _result_from_offsets(db, _inside(db, np.arange(db.total_points), q))


def range_result_points(db: TrajectoryDatabase, index: GridIndex, q: RangeQuery) -> np.ndarray:
    """Flat offsets of the points inside the box (the query's result points)."""
    return _inside(db, index.candidates(q), q)


# ============================================================================
# kNN and similarity
# ============================================================================


def knn_query(
    db: TrajectoryDatabase,
    q: KnnQuery,
    edr_threshold: float = DEFAULT_EDR_THRESHOLD_M,
    projection: Projection | None = None,
) -> QueryResult:
    """
    The ``k`` trajectories closest to ``q.query`` by EDR within the time window.

    Candidates are the trajectories with at least one point in the window. Ties are broken by
    ascending trajectory id. With fewer than ``k`` candidates every candidate is returned and
    the result is flagged ``short``.
    """
    projection = projection or Projection.for_database(db)
    query_xy = projection.project(q.query.restrict(q.t_start, q.t_end)).xy()

    scored: list[tuple[int, str]] = []
    for traj in db:
        window = traj.restrict(q.t_start, q.t_end)
        if window.is_empty:
            continue
        distance = edr_planar(query_xy, projection.project(window).xy(), edr_threshold)
        scored.append((distance, traj.id))
    scored.sort()

    ranking = tuple(traj_id for _, traj_id in scored[: q.k])
    short = len(scored) < q.k
    if short:
        logger.debug(f"kNN query found {len(scored)} candidates for k={q.k}")
    return QueryResult(ids=frozenset(ranking), ranking=ranking, short=short)


def tick_times(t_start: float, t_end: float, tick: float) -> np.ndarray:
    """``t_start, t_start + tick, ...`` up to and including ``t_end`` when it falls on a tick."""
    if tick <= 0:
        raise InvalidArgumentError(f"Tick must be positive, got {tick}")
    count = math.floor((t_end - t_start) / tick + 1e-9) + 1
    return t_start + tick * np.arange(count, dtype=np.float64)


def similarity_query(
    db: TrajectoryDatabase,
    q: SimilarityQuery,
    tick: float = DEFAULT_TICK_S,
    projection: Projection | None = None,
) -> QueryResult:
    """
    Trajectories staying within ``q.delta`` of the query trajectory at every tick.

    Positions are linearly interpolated at each tick in the window. Trajectories that do not
    cover the whole window are excluded.

    Raises:
        InvalidArgumentError: If the query trajectory does not span the window.
    """
    query = q.query
    if query.is_empty or query.t[0] > q.t_start or query.t[-1] < q.t_end:
        raise InvalidArgumentError(
            f"Query trajectory {query.id} does not span [{q.t_start}, {q.t_end}]"
        )
    projection = projection or Projection.for_database(db)
    ticks = tick_times(q.t_start, q.t_end, tick)
    qp = projection.project(query)
    qx = np.interp(ticks, qp.t, qp.px)
    qy = np.interp(ticks, qp.t, qp.py)

    matched: set[str] = set()
    for traj in db:
        if traj.is_empty or traj.t[0] > q.t_start or traj.t[-1] < q.t_end:
            continue
        tp = projection.project(traj)
        dist = np.hypot(np.interp(ticks, tp.t, tp.px) - qx, np.interp(ticks, tp.t, tp.py) - qy)
        if np.all(dist <= q.delta):
            matched.add(traj.id)
    return QueryResult(ids=frozenset(matched))


# ============================================================================
# Clustering
# ============================================================================


class _DisjointSet:
    def __init__(self, size: int) -> None:
        self.parent = list(range(size))

    def find(self, i: int) -> int:
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # smaller root wins so the partition is independent of pair order
            self.parent[max(ri, rj)] = min(ri, rj)


def cluster(
    db: TrajectoryDatabase,
    edr_threshold: float = DEFAULT_EDR_THRESHOLD_M,
    link_threshold: int = DEFAULT_LINK_THRESHOLD,
    window: tuple[float, float] | None = None,
    projection: Projection | None = None,
) -> Partition:
    """
    Single-linkage clustering: trajectories with EDR <= ``link_threshold`` are linked and the
    connected components are the clusters.

    With a ``window`` each trajectory is restricted to its points inside it first; trajectories
    with no points left are singletons. Clusters are ordered by their first member's position.
    """
    if edr_threshold <= 0:
        raise InvalidArgumentError(f"EDR threshold must be positive, got {edr_threshold}")
    if link_threshold < 0:
        raise InvalidArgumentError(f"Link threshold must be non-negative, got {link_threshold}")
    projection = projection or Projection.for_database(db)

    sequences = [
        projection.project(traj.restrict(*window) if window else traj).xy() for traj in db
    ]
    sets = _DisjointSet(len(sequences))
    for i in range(len(sequences)):
        if len(sequences[i]) == 0:
            continue
        for j in range(i + 1, len(sequences)):
            if len(sequences[j]) == 0:
                continue
            # EDR is at least the length difference
            if abs(len(sequences[i]) - len(sequences[j])) > link_threshold:
                continue
            if sets.find(i) == sets.find(j):
                continue
            if edr_planar(sequences[i], sequences[j], edr_threshold) <= link_threshold:
                sets.union(i, j)

    groups: dict[int, list[str]] = {}
    for i, traj in enumerate(db):
        groups.setdefault(sets.find(i), []).append(traj.id)
    return tuple(frozenset(members) for members in groups.values())


# ============================================================================
# Engine
# ============================================================================


@dataclass
class QueryEngine:
    """A database bound to its index, projection and query settings."""

    db: TrajectoryDatabase
    projection: Projection
    index: GridIndex
    edr_threshold: float = DEFAULT_EDR_THRESHOLD_M
    tick: float = DEFAULT_TICK_S

    @classmethod
    def build(
        cls,
        db: TrajectoryDatabase,
        projection: Projection | None = None,
        spatial_cell: float = DEFAULT_SPATIAL_CELL_M,
        temporal_cell: float = DEFAULT_TEMPORAL_CELL_S,
        edr_threshold: float = DEFAULT_EDR_THRESHOLD_M,
        tick: float = DEFAULT_TICK_S,
    ) -> QueryEngine:
        projection = projection or Projection.for_database(db)
        return cls(
            db=db,
            projection=projection,
            index=build_index(db, spatial_cell, temporal_cell, projection),
            edr_threshold=edr_threshold,
            tick=tick,
        )

    def run(self, query: Query) -> QueryResult | Partition:
        match query:
            case RangeQuery():
                return range_query(self.db, self.index, query)
            case KnnQuery():
                return knn_query(self.db, query, self.edr_threshold, self.projection)
            case SimilarityQuery():
                return similarity_query(self.db, query, self.tick, self.projection)
            case ClusteringQuery():
                return cluster(
                    self.db,
                    query.edr_threshold,
                    query.link_threshold,
                    (query.t_start, query.t_end),
                    self.projection,
                )
        raise InvalidArgumentError(f"Unsupported query type: {type(query).__name__}")
