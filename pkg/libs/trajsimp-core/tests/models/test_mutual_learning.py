"""Tests for the mutual-learning loop between GNN-TS and Diff-TS."""

from pathlib import Path

import numpy as np
import pytest
from pydantic import ValidationError
from trajsimp_core.exceptions import DataError, InvalidArgumentError
from trajsimp_core.models.diff_ts import DiffTsConfig, DiffusionModel
from trajsimp_core.models.gnn_ts import CellVocabulary, GnnTsConfig, ImportanceModel, train_gnn_ts
from trajsimp_core.models.mutual_learning import (
    MlSchedule,
    TrainingLog,
    TrainingStage,
    phase_seed,
    run_mutual_learning,
    soft_labels,
)
from trajsimp_core.nn.layers import Module
from trajsimp_core.schemas.trajectory import TrajectoryDatabase

from tests.factories import TrainingLogRecordFactory


@pytest.fixture
def corpus(small_db: TrajectoryDatabase) -> TrajectoryDatabase:
    return TrajectoryDatabase(trajectories=small_db.trajectories[:3])


@pytest.fixture
def quick_schedule() -> MlSchedule:
    return MlSchedule(exchange_epochs=1, stage1_epochs=1, rounds=1, alpha=3, seed=9)


def assert_same_parameters(left: Module, right: Module) -> None:
    right_state = right.state_dict()
    for name, value in left.state_dict().items():
        np.testing.assert_array_equal(value, right_state[name], err_msg=name)


@pytest.mark.unit
class TestSchedule:
    """Tests for schedule validation and phase seeds."""

    @pytest.mark.parametrize("cr_high", [0.4, 1.0])
    def test_cr_high_range(self, cr_high: float) -> None:
        """Test that the soft-label rate must lie in [0.5, 1)."""
        with pytest.raises(ValidationError):
            MlSchedule(cr_high=cr_high)

    def test_phase_seeds(self) -> None:
        """Test that phase seeds are reproducible and differ between phases."""
        assert phase_seed(3, 2, 0) == phase_seed(3, 2, 0)
        assert len({phase_seed(3, 1), phase_seed(3, 2, 0), phase_seed(3, 2, 1)}) == 3
        assert phase_seed(3, 1) != phase_seed(4, 1)


@pytest.mark.unit
class TestSoftLabels:
    """Tests for importance-weighted soft-label sampling."""

    def test_counts_per_trajectory(
        self, importance_model: ImportanceModel, corpus: TrajectoryDatabase
    ) -> None:
        """Test that each trajectory keeps round(cr_high * n) distinct points."""
        soft = soft_labels(importance_model, corpus, 0.5, seed=1)
        assert [r.size for r in soft.retained] == [15, 15, 15]
        assert soft.retained_count == 45
        for kept in soft.retained:
            assert np.all(np.diff(kept) > 0)

    def test_deterministic_in_seed(
        self, importance_model: ImportanceModel, corpus: TrajectoryDatabase
    ) -> None:
        """Test that the same seed samples the same points."""
        first = soft_labels(importance_model, corpus, 0.7, seed=4)
        second = soft_labels(importance_model, corpus, 0.7, seed=4)
        for left, right in zip(first.retained, second.retained, strict=True):
            np.testing.assert_array_equal(left, right)

    @pytest.mark.parametrize("cr_high", [0.4, 1.0])
    def test_rate_out_of_range_raises(
        self, importance_model: ImportanceModel, corpus: TrajectoryDatabase, cr_high: float
    ) -> None:
        """Test soft-label rate validation."""
        with pytest.raises(InvalidArgumentError):
            soft_labels(importance_model, corpus, cr_high, seed=0)


@pytest.mark.unit
class TestTrainingLog:
    """Tests for the JSON-lines training log."""

    def test_file_mirrors_records(
        self, tmp_path: Path, training_log_record_factory: type[TrainingLogRecordFactory]
    ) -> None:
        """Test that appended records read back from disk unchanged."""
        log = TrainingLog(tmp_path / "logs" / "training.jsonl")
        records = training_log_record_factory.batch(3)
        for record in records:
            log.append(record)
        assert TrainingLog.read(tmp_path / "logs" / "training.jsonl") == records
        assert log.records == records

    def test_memory_only(self, training_log_record_factory: type[TrainingLogRecordFactory]) -> None:
        """Test that a log without a path only keeps records in memory."""
        log = TrainingLog()
        log.append(training_log_record_factory.build())
        assert len(log.records) == 1


@pytest.mark.integration
class TestMutualLearning:
    """Tests for the full two-stage loop on a tiny corpus."""

    def test_zero_rounds_is_stage_one(
        self,
        vocab: CellVocabulary,
        tiny_gnn_config: GnnTsConfig,
        diffusion_model: DiffusionModel,
        corpus: TrajectoryDatabase,
    ) -> None:
        """Test that without exchange rounds only contrastive GNN-TS training happens."""
        schedule = MlSchedule(stage1_epochs=2, rounds=0, seed=6)
        reference = ImportanceModel(vocab, tiny_gnn_config)
        train_gnn_ts(reference, corpus, epochs=2, seed=phase_seed(6, 1))
        untouched = DiffusionModel(diffusion_model.vocab, diffusion_model.config)

        result = run_mutual_learning(
            corpus,
            schedule,
            importance_model=ImportanceModel(vocab, tiny_gnn_config),
            diffusion_model=diffusion_model,
        )

        assert_same_parameters(result.importance_model, reference)
        assert_same_parameters(result.diffusion_model, untouched)
        assert [r.stage for r in result.log] == [TrainingStage.STAGE1] * 2

    def test_log_records_every_phase(
        self,
        tmp_path: Path,
        importance_model: ImportanceModel,
        diffusion_model: DiffusionModel,
        corpus: TrajectoryDatabase,
        quick_schedule: MlSchedule,
    ) -> None:
        """Test the order of epoch and exchange records and the file copy of the log."""
        path = tmp_path / "training.jsonl"
        result = run_mutual_learning(
            corpus, quick_schedule, importance_model, diffusion_model, log_path=path
        )

        assert [r.stage for r in result.log] == [
            TrainingStage.STAGE1,
            TrainingStage.SOFT_LABELS,
            TrainingStage.DIFF_TS,
            TrainingStage.AMPLIFIED_LABELS,
            TrainingStage.GNN_TS,
        ]
        assert [r.exchange for r in result.log] == [False, True, False, True, False]
        assert result.log[1].components == {"points": 45.0}
        assert result.log[3].components == {"trajectories": 3.0}
        assert "ml" in result.log[4].components
        assert TrainingLog.read(path) == result.log

    def test_empty_corpus_raises(self) -> None:
        """Test that training needs trajectories."""
        with pytest.raises(DataError):
            run_mutual_learning(TrajectoryDatabase())


@pytest.mark.slow
class TestMutualLearningDeterminism:
    """Repeated runs with one seed."""

    def test_same_seed_same_models(
        self,
        vocab: CellVocabulary,
        tiny_gnn_config: GnnTsConfig,
        tiny_diff_config: DiffTsConfig,
        corpus: TrajectoryDatabase,
    ) -> None:
        """Test that two runs with the same seed end with identical parameters."""
        schedule = MlSchedule(exchange_epochs=2, stage1_epochs=2, rounds=2, alpha=3, seed=12)
        runs = [
            run_mutual_learning(
                corpus,
                schedule,
                ImportanceModel(vocab, tiny_gnn_config),
                DiffusionModel(vocab, tiny_diff_config),
            )
            for _ in range(2)
        ]
        assert_same_parameters(runs[0].importance_model, runs[1].importance_model)
        assert_same_parameters(runs[0].diffusion_model, runs[1].diffusion_model)
        assert [r.loss for r in runs[0].log] == [r.loss for r in runs[1].log]
