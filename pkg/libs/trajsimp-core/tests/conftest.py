"""Pytest configuration and shared fixtures."""

import numpy as np
import pytest
from polyfactory.pytest_plugin import register_fixture
from trajsimp_core.models.diff_ts import DiffTsConfig, DiffusionModel
from trajsimp_core.models.gnn_ts import CellVocabulary, GnnTsConfig, ImportanceModel
from trajsimp_core.schemas.trajectory import Trajectory, TrajectoryDatabase

from tests.factories import (
    BaselineSpecFactory,
    QueryQualityReportFactory,
    TrainingLogRecordFactory,
    ValidationIssueFactory,
    WorkloadSpecFactory,
    planar_trajectory,
    random_walk_database,
    twin_database,
)

# Register factories to create pytest fixtures automatically
register_fixture(WorkloadSpecFactory)
register_fixture(BaselineSpecFactory)
register_fixture(TrainingLogRecordFactory)
register_fixture(ValidationIssueFactory)
register_fixture(QueryQualityReportFactory)


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so tests stay independent of pytest-randomly's global seeding."""
    return np.random.default_rng(20240601)


# ============================================================================
# Database Fixtures
# ============================================================================


@pytest.fixture
def small_db() -> TrajectoryDatabase:
    """Twelve 30-point random walks."""
    return random_walk_database(count=12, length=30, seed=7)


@pytest.fixture
def twin_db() -> TrajectoryDatabase:
    """Six pairs of near-identical trajectories, pairs far apart from each other."""
    return twin_database(pairs=6, length=25, seed=11)


@pytest.fixture
def zigzag() -> Trajectory:
    """Planar trajectory with one sharp corner at index 4."""
    return planar_trajectory(
        "zigzag",
        [(0, 0), (1, 0.1), (2, -0.1), (3, 0.05), (4, 0), (4.1, 1), (3.9, 2), (4, 3)],
        [0, 10, 20, 30, 40, 50, 60, 70],
    )


# ============================================================================
# Model Fixtures
# ============================================================================


@pytest.fixture
def tiny_gnn_config() -> GnnTsConfig:
    """GNN-TS sized for unit tests."""
    return GnnTsConfig(
        dim=8,
        layers=1,
        heads=2,
        segment_length=6,
        gat_layers=2,
        gat_heads=2,
        gat_dim=4,
        neighbors=3,
        seed=3,
    )


@pytest.fixture
def tiny_diff_config() -> DiffTsConfig:
    """Diff-TS sized for unit tests."""
    return DiffTsConfig(
        dim=8,
        encoder_layers=1,
        encoder_heads=2,
        denoiser_layers=1,
        denoiser_heads=2,
        steps=6,
        reference_steps=1_000,
        amplified_count=3,
        seed=5,
    )


@pytest.fixture
def vocab(small_db: TrajectoryDatabase) -> CellVocabulary:
    """Cell vocabulary of the small database at 100 m."""
    return CellVocabulary.build(small_db, 100.0)


@pytest.fixture
def importance_model(vocab: CellVocabulary, tiny_gnn_config: GnnTsConfig) -> ImportanceModel:
    """Untrained GNN-TS over the small database's vocabulary."""
    return ImportanceModel(vocab, tiny_gnn_config)


@pytest.fixture
def diffusion_model(vocab: CellVocabulary, tiny_diff_config: DiffTsConfig) -> DiffusionModel:
    """Untrained Diff-TS over the small database's vocabulary."""
    return DiffusionModel(vocab, tiny_diff_config)
