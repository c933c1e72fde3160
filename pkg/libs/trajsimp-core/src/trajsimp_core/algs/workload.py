"""Query workload generation and F1 quality metrics."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from trajsimp_core._compat import StrEnum
from itertools import combinations

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import ContractError, InvalidArgumentError
from ..schemas.trajectory import SimplifiedDatabase, TrajectoryDatabase
from .distance import DEFAULT_EDR_THRESHOLD_M, Projection
from .queries import (
    DEFAULT_LINK_THRESHOLD,
    DEFAULT_TICK_S,
    ClusteringQuery,
    KnnQuery,
    Partition,
    Query,
    QueryEngine,
    QueryResult,
    RangeQuery,
    SimilarityQuery,
)

logger = logging.getLogger(__name__)


class QueryType(StrEnum):
    RANGE = "range"
    KNN = "knn"
    SIMILARITY = "similarity"
    CLUSTERING = "clustering"


class Distribution(StrEnum):
    DATA = "data"  # centers drawn uniformly from database points
    GAUSSIAN = "gaussian"  # centers drawn from N(mu, sigma^2) over the normalized extent


_TYPE_STREAM = {
    QueryType.RANGE: 0,
    QueryType.KNN: 1,
    QueryType.SIMILARITY: 2,
    QueryType.CLUSTERING: 3,
}


class WorkloadSpec(BaseModel):
    """Parameters of a synthetic query workload."""

    model_config = ConfigDict(frozen=True)

    query_type: QueryType = Field(description="Kind of query to generate")
    count: int = Field(default=100, ge=1, description="Number of queries")
    distribution: Distribution = Field(default=Distribution.DATA, description="Center sampling")
    mu: float = Field(default=0.5, description="Gaussian mean on the normalized extent")
    sigma: float = Field(default=0.25, gt=0, description="Gaussian std on the normalized extent")
    spatial_window_m: float = Field(default=2_000.0, gt=0, description="Box side, meters")
    temporal_window_s: float = Field(default=7_200.0, gt=0, description="Window length, seconds")
    k: int = Field(default=3, ge=1, description="kNN result size")
    delta_m: float = Field(default=5_000.0, gt=0, description="Similarity distance bound")
    edr_threshold_m: float = Field(default=DEFAULT_EDR_THRESHOLD_M, gt=0, description="EDR match")
    link_threshold: int = Field(default=DEFAULT_LINK_THRESHOLD, ge=0, description="Cluster link")
    tick_s: float = Field(default=DEFAULT_TICK_S, gt=0, description="Similarity tick")
    seed: int = Field(default=0, ge=0, description="Workload RNG seed")


@dataclass(frozen=True)
class QueryWorkload:
    """Concrete queries plus the spec that generated them."""

    spec: WorkloadSpec
    queries: tuple[Query, ...]

    def __len__(self) -> int:
        return len(self.queries)


# ============================================================================
# Generation
# ============================================================================


def _rng_for(spec: WorkloadSpec) -> np.random.Generator:
    stream = _TYPE_STREAM[spec.query_type]
    sequence = np.random.SeedSequence(entropy=spec.seed, spawn_key=(stream,))
    return np.random.default_rng(sequence)


def _center(db: TrajectoryDatabase, spec: WorkloadSpec, rng: np.random.Generator) -> np.ndarray:
    """A (lon, lat, t) query center."""
    flat = db.flat
    if spec.distribution is Distribution.DATA:
        i = int(rng.integers(len(flat)))
        return np.array([flat.x[i], flat.y[i], float(flat.t[i])])
    box = db.bounding_box()
    u = np.clip(rng.normal(spec.mu, spec.sigma, size=3), 0.0, 1.0)
    return np.array(
        [
            box.x_min + u[0] * (box.x_max - box.x_min),
            box.y_min + u[1] * (box.y_max - box.y_min),
            box.t_min + u[2] * (box.t_max - box.t_min),
        ]
    )


def _range_query(center: np.ndarray, spec: WorkloadSpec, projection: Projection) -> RangeQuery:
    cx, cy = projection.forward(center[0], center[1])
    half = spec.spatial_window_m / 2.0
    x_lo, y_lo = projection.inverse(float(cx) - half, float(cy) - half)
    x_hi, y_hi = projection.inverse(float(cx) + half, float(cy) + half)
    half_t = spec.temporal_window_s / 2.0
    return RangeQuery(
        x_min=float(x_lo),
        x_max=float(x_hi),
        y_min=float(y_lo),
        y_max=float(y_hi),
        t_min=float(center[2] - half_t),
        t_max=float(center[2] + half_t),
    )


def generate_workload(db: TrajectoryDatabase, spec: WorkloadSpec) -> QueryWorkload:
    """
    Generate ``spec.count`` queries against ``db``.

    Deterministic for a given ``(db, spec)``. Range and clustering queries are centered on a
    sampled (lon, lat, t); kNN and similarity queries draw their query trajectory uniformly
    from ``db``. Similarity windows are clipped to the query trajectory's time span.

    Raises:
        InvalidArgumentError: If ``db`` has no points.
    """
    if db.total_points == 0:
        raise InvalidArgumentError("Cannot generate a workload over an empty database")
    rng = _rng_for(spec)
    projection = Projection.for_database(db)
    half_t = spec.temporal_window_s / 2.0
    queries: list[Query] = []

    for _ in range(spec.count):
        match spec.query_type:
            case QueryType.RANGE:
                queries.append(_range_query(_center(db, spec, rng), spec, projection))
            case QueryType.CLUSTERING:
                t_center = float(_center(db, spec, rng)[2])
                queries.append(
                    ClusteringQuery(
                        t_start=t_center - half_t,
                        t_end=t_center + half_t,
                        edr_threshold=spec.edr_threshold_m,
                        link_threshold=spec.link_threshold,
                    )
                )
            case QueryType.KNN:
                query = db.trajectories[int(rng.integers(len(db)))]
                if spec.distribution is Distribution.DATA:
                    t_center = float(query.t[int(rng.integers(len(query)))])
                else:
                    t_center = float(_center(db, spec, rng)[2])
                queries.append(
                    KnnQuery(
                        k=spec.k,
                        query=query,
                        t_start=t_center - half_t,
                        t_end=t_center + half_t,
                    )
                )
            case QueryType.SIMILARITY:
                query = db.trajectories[int(rng.integers(len(db)))]
                t0, t1 = float(query.t[0]), float(query.t[-1])
                length = min(spec.temporal_window_s, t1 - t0)
                if spec.distribution is Distribution.DATA:
                    start = t0 + float(rng.uniform(0.0, (t1 - t0) - length))
                else:
                    t_center = float(_center(db, spec, rng)[2])
                    start = float(np.clip(t_center - length / 2.0, t0, t1 - length))
                queries.append(
                    SimilarityQuery(
                        query=query,
                        t_start=start,
                        t_end=min(start + length, t1),
                        delta=spec.delta_m,
                    )
                )

    logger.debug(
        f"Generated {len(queries)} {spec.query_type} queries "
        f"({spec.distribution}, seed={spec.seed})"
    )
    return QueryWorkload(spec=spec, queries=tuple(queries))


# ============================================================================
# F1 metrics
# ============================================================================


def _f1(overlap: int, size_s: int, size_o: int) -> float:
    if size_s == 0 and size_o == 0:
        return 1.0
    if overlap == 0:
        return 0.0
    precision = overlap / size_s
    recall = overlap / size_o
    return 2.0 * precision * recall / (precision + recall)


def f1_query(rs: QueryResult | Iterable[str], ro: QueryResult | Iterable[str]) -> float:
    """F1 of the simplified result ``rs`` against the original ``ro`` (1.0 if both empty)."""
    set_s = set(rs.ids) if isinstance(rs, QueryResult) else set(rs)
    set_o = set(ro.ids) if isinstance(ro, QueryResult) else set(ro)
    return _f1(len(set_s & set_o), len(set_s), len(set_o))


def co_membership_pairs(partition: Partition) -> set[tuple[str, str]]:
    """Unordered same-cluster pairs, each as a sorted tuple."""
    pairs: set[tuple[str, str]] = set()
    for members in partition:
        pairs.update(combinations(sorted(members), 2))
    return pairs


def f1_clustering(cs: Partition, co: Partition) -> float:
    """
    F1 over co-membership pairs; all-singletons against all-singletons scores 1.

    Raises:
        ContractError: If the partitions cover different id sets.
    """
    universe_s = set().union(*cs) if cs else set()
    universe_o = set().union(*co) if co else set()
    if universe_s != universe_o:
        raise ContractError("Clustering partitions cover different trajectory ids")
    pairs_s, pairs_o = co_membership_pairs(cs), co_membership_pairs(co)
    return _f1(len(pairs_s & pairs_o), len(pairs_s), len(pairs_o))


# ============================================================================
# Suite evaluation
# ============================================================================


class QueryQualityReport(BaseModel):
    """Mean F1 per query type."""

    mean_f1: dict[QueryType, float] = Field(default_factory=dict, description="Mean F1 per type")
    query_count: dict[QueryType, int] = Field(default_factory=dict, description="Queries per type")


def evaluate_suite(
    original_db: TrajectoryDatabase,
    simplified_db: TrajectoryDatabase | SimplifiedDatabase,
    workloads: Sequence[QueryWorkload],
    max_workers: int = 1,
) -> QueryQualityReport:
    """
    Run every workload query on both databases and average F1 per query type.

    Both databases are queried in the original's projection. With ``max_workers > 1`` queries
    run on a thread pool; results are consumed in workload order either way.

    A simplification that keeps no points of a non-empty original scores 0 on every query,
    including queries whose original result is empty and all-singleton clusterings.
    """
    if isinstance(simplified_db, SimplifiedDatabase):
        simplified_db = simplified_db.as_database()
    projection = Projection.for_database(original_db)
    nothing_kept = simplified_db.total_points == 0 < original_db.total_points
    if nothing_kept:
        logger.warning("Simplified database keeps no points; every query scores F1 = 0")

    scores: dict[QueryType, list[float]] = {}
    for workload in workloads:
        spec = workload.spec
        engines = [
            QueryEngine.build(
                db, projection, edr_threshold=spec.edr_threshold_m, tick=spec.tick_s
            )
            for db in (original_db, simplified_db)
        ]
        original_engine, simplified_engine = engines

        def score(query: Query) -> float:
            if nothing_kept:
                return 0.0
            ro = original_engine.run(query)
            rs = simplified_engine.run(query)
            if isinstance(ro, QueryResult) and isinstance(rs, QueryResult):
                return f1_query(rs, ro)
            if isinstance(ro, tuple) and isinstance(rs, tuple):
                return f1_clustering(rs, ro)
            raise ContractError("Mismatched query result types")

        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                values = list(pool.map(score, workload.queries))
        else:
            values = [score(q) for q in workload.queries]
        scores.setdefault(spec.query_type, []).extend(values)
        logger.info(
            f"{spec.query_type}: mean F1 {np.mean(values):.4f} over {len(values)} queries"
        )

    return QueryQualityReport(
        mean_f1={qt: float(np.mean(v)) for qt, v in scores.items()},
        query_count={qt: len(v) for qt, v in scores.items()},
    )
