"""Tests for workload generation, F1 metrics and suite evaluation."""

import numpy as np
import pytest
from pydantic import ValidationError
from trajsimp_core.algs.distance import EARTH_RADIUS_M
from trajsimp_core.algs.queries import KnnQuery, QueryResult, RangeQuery, SimilarityQuery
from trajsimp_core.algs.workload import (
    Distribution,
    QueryQualityReport,
    QueryType,
    QueryWorkload,
    WorkloadSpec,
    co_membership_pairs,
    evaluate_suite,
    f1_clustering,
    f1_query,
    generate_workload,
)
from trajsimp_core.exceptions import ContractError, InvalidArgumentError
from trajsimp_core.schemas.trajectory import SimplifiedDatabase, TrajectoryDatabase

from tests.factories import QueryQualityReportFactory, WorkloadSpecFactory


def suite(db: TrajectoryDatabase, count: int = 6, seed: int = 1) -> list[QueryWorkload]:
    return [
        generate_workload(db, WorkloadSpec(query_type=qt, count=count, seed=seed))
        for qt in QueryType
    ]


@pytest.mark.unit
class TestWorkloadSpec:
    """Tests for the WorkloadSpec model."""

    def test_spec_is_frozen(self, workload_spec_factory: type[WorkloadSpecFactory]) -> None:
        """Test that a built spec cannot be mutated."""
        spec = workload_spec_factory.build()
        with pytest.raises(ValidationError):
            spec.count = 3

    def test_count_must_be_positive(self) -> None:
        """Test that an empty workload is rejected at construction."""
        with pytest.raises(ValidationError):
            WorkloadSpec(query_type=QueryType.RANGE, count=0)


@pytest.mark.unit
class TestGenerateWorkload:
    """Tests for generate_workload."""

    @pytest.mark.parametrize("query_type", list(QueryType))
    def test_deterministic_and_sized(
        self, small_db: TrajectoryDatabase, query_type: QueryType
    ) -> None:
        """Test that the same spec yields the same queries, count times."""
        spec = WorkloadSpec(query_type=query_type, count=8, seed=4)
        first = generate_workload(small_db, spec)
        second = generate_workload(small_db, spec)
        assert len(first) == 8
        assert first.queries == second.queries

    def test_seed_changes_queries(self, small_db: TrajectoryDatabase) -> None:
        """Test that different seeds give different range boxes."""
        a = generate_workload(small_db, WorkloadSpec(query_type=QueryType.RANGE, count=5, seed=1))
        b = generate_workload(small_db, WorkloadSpec(query_type=QueryType.RANGE, count=5, seed=2))
        assert a.queries != b.queries

    def test_data_range_boxes_contain_a_point(self, small_db: TrajectoryDatabase) -> None:
        """Test that data-distributed range queries are centered on database points."""
        workload = generate_workload(
            small_db, WorkloadSpec(query_type=QueryType.RANGE, count=20, seed=3)
        )
        flat = small_db.flat
        for q in workload.queries:
            assert isinstance(q, RangeQuery)
            inside = (
                (flat.x >= q.x_min) & (flat.x <= q.x_max)
                & (flat.y >= q.y_min) & (flat.y <= q.y_max)
                & (flat.t >= q.t_min) & (flat.t <= q.t_max)
            )
            assert inside.any()

    def test_box_side_matches_window(self, small_db: TrajectoryDatabase) -> None:
        """Test that the box spans the configured side and window."""
        spec = WorkloadSpec(
            query_type=QueryType.RANGE, count=3, spatial_window_m=1_000.0, temporal_window_s=600.0
        )
        q = generate_workload(small_db, spec).queries[0]
        assert isinstance(q, RangeQuery)
        meters_per_degree = EARTH_RADIUS_M * np.pi / 180.0
        assert (q.y_max - q.y_min) * meters_per_degree == pytest.approx(1_000.0, rel=1e-9)
        assert q.t_max - q.t_min == pytest.approx(600.0)

    def test_similarity_windows_inside_query_span(self, small_db: TrajectoryDatabase) -> None:
        """Test that similarity windows are clipped to the query trajectory."""
        for distribution in Distribution:
            spec = WorkloadSpec(
                query_type=QueryType.SIMILARITY, count=10, distribution=distribution, seed=5
            )
            for q in generate_workload(small_db, spec).queries:
                assert isinstance(q, SimilarityQuery)
                assert q.query.t[0] <= q.t_start <= q.t_end <= q.query.t[-1]

    def test_knn_queries_use_database_trajectories(self, small_db: TrajectoryDatabase) -> None:
        """Test that kNN query trajectories come from the database."""
        spec = WorkloadSpec(query_type=QueryType.KNN, count=10, k=4, seed=6)
        for q in generate_workload(small_db, spec).queries:
            assert isinstance(q, KnnQuery)
            assert q.k == 4
            assert q.query == small_db[q.query.id]

    def test_gaussian_centers(self, small_db: TrajectoryDatabase) -> None:
        """Test that Gaussian range workloads generate valid boxes."""
        spec = WorkloadSpec(
            query_type=QueryType.RANGE, count=10, distribution=Distribution.GAUSSIAN, sigma=0.1
        )
        box = small_db.bounding_box()
        for q in generate_workload(small_db, spec).queries:
            centre_t = (q.t_min + q.t_max) / 2
            assert box.t_min <= centre_t <= box.t_max

    def test_empty_database_raises(self) -> None:
        """Test that a workload needs points to draw from."""
        with pytest.raises(InvalidArgumentError):
            generate_workload(TrajectoryDatabase(), WorkloadSpec(query_type=QueryType.RANGE))


@pytest.mark.unit
class TestF1:
    """Tests for the F1 metrics."""

    def test_partial_overlap(self) -> None:
        """Test F1 of {a, b} against {a, c}."""
        assert f1_query({"a", "b"}, {"a", "c"}) == pytest.approx(0.5)

    def test_both_empty_scores_one(self) -> None:
        """Test that two empty results agree perfectly."""
        assert f1_query(QueryResult(ids=frozenset()), QueryResult(ids=frozenset())) == 1.0

    def test_one_empty_scores_zero(self) -> None:
        """Test that an empty result against a non-empty one scores 0."""
        assert f1_query(set(), {"a"}) == 0.0
        assert f1_query({"a"}, set()) == 0.0

    def test_co_membership_pairs(self) -> None:
        """Test that pairs are unordered and sorted."""
        pairs = co_membership_pairs((frozenset({"b", "a", "c"}), frozenset({"d"})))
        assert pairs == {("a", "b"), ("a", "c"), ("b", "c")}

    def test_clustering_f1(self) -> None:
        """Test clustering F1 over co-membership pairs."""
        simplified = (frozenset({"a", "b"}), frozenset({"c"}))
        original = (frozenset({"a", "b", "c"}),)
        assert f1_clustering(simplified, original) == pytest.approx(0.5)

    def test_all_singletons_agree(self) -> None:
        """Test that singleton partitions on both sides score 1."""
        singletons = (frozenset({"a"}), frozenset({"b"}))
        assert f1_clustering(singletons, singletons) == 1.0

    def test_different_universes_raise(self) -> None:
        """Test that partitions must cover the same ids."""
        with pytest.raises(ContractError):
            f1_clustering((frozenset({"a"}),), (frozenset({"b"}),))


@pytest.mark.integration
class TestEvaluateSuite:
    """Tests for evaluate_suite."""

    def test_identity_scores_one(self, small_db: TrajectoryDatabase) -> None:
        """Test that the unsimplified database scores 1 on every query type."""
        report = evaluate_suite(small_db, SimplifiedDatabase.identity(small_db), suite(small_db))
        assert set(report.mean_f1) == set(QueryType)
        for query_type in QueryType:
            assert report.mean_f1[query_type] == pytest.approx(1.0)
            assert report.query_count[query_type] == 6

    def test_empty_simplification_scores_zero(self, twin_db: TrajectoryDatabase) -> None:
        """Test that keeping no points scores 0 on every query type."""
        empty = SimplifiedDatabase(
            original=twin_db,
            retained=tuple(np.zeros(0, dtype=np.int64) for _ in twin_db),
            compression_rate=0.01,
        )
        report = evaluate_suite(twin_db, empty, suite(twin_db, count=4))
        for query_type in QueryType:
            assert report.mean_f1[query_type] == 0.0

    def test_empty_simplification_of_unclustered_walks(
        self, small_db: TrajectoryDatabase
    ) -> None:
        """Test that empty results and all-singleton clusterings do not rescue a zero-point run."""
        empty = SimplifiedDatabase(
            original=small_db,
            retained=tuple(np.zeros(0, dtype=np.int64) for _ in small_db),
            compression_rate=0.01,
        )
        for max_workers in (1, 2):
            report = evaluate_suite(small_db, empty, suite(small_db), max_workers=max_workers)
            assert report.mean_f1 == {query_type: 0.0 for query_type in QueryType}
            assert report.query_count == {query_type: 6 for query_type in QueryType}

    def test_thread_pool_matches_sequential(self, small_db: TrajectoryDatabase) -> None:
        """Test that parallel evaluation gives the same report."""
        simplified = SimplifiedDatabase.from_selection(
            small_db, [np.arange(0, len(t), 3) for t in small_db]
        )
        workloads = suite(small_db, count=5, seed=9)
        sequential = evaluate_suite(small_db, simplified, workloads)
        parallel = evaluate_suite(small_db, simplified, workloads, max_workers=2)
        assert parallel == sequential

    def test_report_json_round_trip(
        self, query_quality_report_factory: type[QueryQualityReportFactory]
    ) -> None:
        """Test that reports survive JSON serialization."""
        report = query_quality_report_factory.build()
        assert QueryQualityReport.model_validate_json(report.model_dump_json()) == report
