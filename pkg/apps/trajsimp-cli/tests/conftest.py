"""Pytest configuration and shared fixtures for trajsimp-cli tests."""

import os
from pathlib import Path

import pytest
from polyfactory.pytest_plugin import register_fixture
from pytest_mock import MockerFixture
from trajsimp_cli.config import PipelineConfig
from trajsimp_core.models.gnn_ts import GnnTsConfig, ImportanceModel
from trajsimp_core.schemas.trajectory import TrajectoryDatabase

from tests.factories import (
    EvaluationReportFactory,
    IngestReportFactory,
    twin_database,
    walk_database,
)

# Register factories to create pytest fixtures automatically
register_fixture(IngestReportFactory)
register_fixture(EvaluationReportFactory)


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    """Keep TRAJSIMP_* variables of the developer's shell out of the tests."""
    for name in list(os.environ):
        if name.startswith("TRAJSIMP_"):
            monkeypatch.delenv(name)


# ============================================================================
# Database Fixtures
# ============================================================================


@pytest.fixture
def walk_db() -> TrajectoryDatabase:
    """Ten 40-point random walks (400 points)."""
    return walk_database(count=10, length=40, seed=3)


@pytest.fixture
def twin_db() -> TrajectoryDatabase:
    """Four pairs of near-identical trajectories."""
    return twin_database(pairs=4, length=20, seed=5)


@pytest.fixture
def tiny_gnn_config() -> GnnTsConfig:
    """GNN-TS sized for fast tests."""
    return GnnTsConfig(
        dim=8,
        layers=1,
        heads=2,
        segment_length=8,
        gat_layers=1,
        gat_heads=2,
        gat_dim=4,
        neighbors=3,
        seed=2,
    )


@pytest.fixture
def importance_model(
    walk_db: TrajectoryDatabase, tiny_gnn_config: GnnTsConfig
) -> ImportanceModel:
    """Untrained GNN-TS over the walk database."""
    return ImportanceModel.for_corpus(walk_db, tiny_gnn_config)


@pytest.fixture
def pipeline_config(tmp_path: Path, tiny_gnn_config: GnnTsConfig) -> PipelineConfig:
    """Small configuration writing into a temporary directory."""
    return PipelineConfig(
        output={"dir": tmp_path / "out"},
        importance=tiny_gnn_config,
        workload={"queries": 20, "grid_x": 4, "grid_y": 4, "grid_t": 2},
        evaluation={"queries_per_type": 4},
    )


# ============================================================================
# CLI Fixtures
# ============================================================================


@pytest.fixture
def quiet_logging(mocker: MockerFixture) -> None:
    """Stop CLI invocations from replacing pytest's log handlers."""
    mocker.patch("trajsimp_cli.cli.setup_logging")
