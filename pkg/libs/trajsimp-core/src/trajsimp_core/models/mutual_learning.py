"""
Two-stage mutual learning between GNN-TS and Diff-TS.

Stage 1 trains GNN-TS on the contrastive loss alone. Each stage-2 round then samples soft labels
from GNN-TS, trains Diff-TS on them for ``exchange_epochs`` epochs, infers amplified labels with
Diff-TS and trains GNN-TS for ``exchange_epochs`` epochs against those labels.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from trajsimp_core._compat import StrEnum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..algs.sampling import weighted_sample
from ..exceptions import DataError, InvalidArgumentError
from ..nn.optim import Adam, AdamHyper
from ..schemas.trajectory import SimplifiedDatabase, TrajectoryDatabase
from .diff_ts import DiffTsConfig, DiffusionModel, infer_database, train_diff_ts
from .gnn_ts import EpochStats, GnnTsConfig, ImportanceModel, train_gnn_ts

logger = logging.getLogger(__name__)


class MlSchedule(BaseModel):
    """Cadence and loss weights of mutual learning."""

    model_config = ConfigDict(frozen=True)

    exchange_epochs: int = Field(default=20, ge=1, description="Epochs between signal exchanges")
    stage1_epochs: int = Field(default=20, ge=0, description="Contrastive-only GNN-TS epochs")
    rounds: int = Field(default=2, ge=0, description="Stage-2 exchange rounds")
    cr_high: float = Field(default=0.5, ge=0.5, lt=1.0, description="Soft-label sampling rate")
    alpha: int = Field(default=20, ge=1, description="Points per amplified label set")
    lambda2: float = Field(default=0.5, ge=0, description="Diff-TS diversity weight")
    lambda3: float = Field(default=0.5, ge=0, description="GNN-TS ML loss weight")
    seed: int = Field(default=0, ge=0, description="Root seed for every training phase")


class TrainingStage(StrEnum):
    STAGE1 = "stage1"
    DIFF_TS = "diff_ts"
    GNN_TS = "gnn_ts"
    SOFT_LABELS = "soft_labels"
    AMPLIFIED_LABELS = "amplified_labels"


class TrainingLogRecord(BaseModel):
    """One line of the training log."""

    stage: TrainingStage = Field(description="Phase that produced the record")
    round: int = Field(description="Stage-2 round (-1 during stage 1)")
    epoch: int = Field(description="Epoch within the phase (-1 for exchange events)")
    loss: float | None = Field(default=None, description="Mean total loss of the epoch")
    components: dict[str, float] = Field(default_factory=dict, description="Loss parts / counts")
    exchange: bool = Field(default=False, description="Whether this records a signal exchange")


class TrainingLog:
    """Append-only record list, mirrored to a JSON-lines file when ``path`` is set."""

    def __init__(self, path: Path | None = None):
        self.path = path
        self.records: list[TrainingLogRecord] = []
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("", encoding="utf-8")

    def append(self, record: TrainingLogRecord) -> None:
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(record.model_dump_json() + "\n")

    def epoch_callback(
        self, stage: TrainingStage, round_: int
    ) -> Callable[[EpochStats], None]:
        def record(stats: EpochStats) -> None:
            self.append(
                TrainingLogRecord(
                    stage=stage,
                    round=round_,
                    epoch=stats.epoch,
                    loss=stats.loss,
                    components=dict(stats.extras),
                )
            )

        return record

    @staticmethod
    def read(path: Path) -> list[TrainingLogRecord]:
        lines = path.read_text(encoding="utf-8").splitlines()
        return [TrainingLogRecord.model_validate_json(line) for line in lines if line.strip()]


@dataclass
class MutualLearningResult:
    importance_model: ImportanceModel
    diffusion_model: DiffusionModel
    log: list[TrainingLogRecord] = field(default_factory=list)


def phase_seed(seed: int, *keys: int) -> int:
    """Independent, reproducible seed for one training phase."""
    return int(np.random.SeedSequence(seed, spawn_key=keys).generate_state(1)[0])


def soft_labels(
    model: ImportanceModel, corpus: TrajectoryDatabase, cr_high: float, seed: int
) -> SimplifiedDatabase:
    """
    Sample ``round(cr_high * |T|)`` points of every trajectory, weighted by normalized
    importance and without replacement.

    Raises:
        InvalidArgumentError: If ``cr_high`` is outside ``[0.5, 1)``.
    """
    if not 0.5 <= cr_high < 1.0:
        raise InvalidArgumentError(f"cr_high must be in [0.5, 1), got {cr_high}")
    importance = model.predict_database(corpus)
    rng = np.random.default_rng(seed)
    selection = []
    for traj, weights in zip(corpus, importance.normalized, strict=True):
        count = min(len(traj), max(1, int(np.floor(cr_high * len(traj) + 0.5))))
        selection.append(weighted_sample(weights, count if len(traj) else 0, rng))
    return SimplifiedDatabase.from_selection(corpus, selection)


def run_mutual_learning(
    corpus: TrajectoryDatabase,
    schedule: MlSchedule | None = None,
    importance_model: ImportanceModel | None = None,
    diffusion_model: DiffusionModel | None = None,
    log_path: Path | None = None,
) -> MutualLearningResult:
    """
    Train GNN-TS and Diff-TS against each other.

    Soft labels are regenerated from the current GNN-TS at every round. Both models keep one
    Adam state across all phases. Missing models are created from their default configurations
    over ``corpus``; the diffusion model shares the importance model's vocabulary.

    Raises:
        DataError: If ``corpus`` has no trajectories.
    """
    if len(corpus) == 0:
        raise DataError("Mutual learning needs a non-empty corpus")
    schedule = schedule or MlSchedule()
    gnn = importance_model or ImportanceModel.for_corpus(corpus, GnnTsConfig())
    diff = diffusion_model or DiffusionModel(
        gnn.vocab, DiffTsConfig(amplified_count=schedule.alpha, lambda2=schedule.lambda2)
    )
    log = TrainingLog(log_path)
    gnn_optimizer = Adam(gnn.parameters(), AdamHyper(lr=gnn.config.learning_rate))
    diff_optimizer = Adam(diff.parameters(), AdamHyper(lr=diff.config.learning_rate))

    logger.info(
        f"Mutual learning on {len(corpus)} trajectories: {schedule.stage1_epochs} stage-1 epochs, "
        f"{schedule.rounds} rounds of {schedule.exchange_epochs} epochs"
    )
    train_gnn_ts(
        gnn,
        corpus,
        epochs=schedule.stage1_epochs,
        seed=phase_seed(schedule.seed, 1),
        optimizer=gnn_optimizer,
        on_epoch=log.epoch_callback(TrainingStage.STAGE1, -1),
    )

    for round_ in range(schedule.rounds):
        soft = soft_labels(gnn, corpus, schedule.cr_high, phase_seed(schedule.seed, 2, round_))
        log.append(
            TrainingLogRecord(
                stage=TrainingStage.SOFT_LABELS,
                round=round_,
                epoch=-1,
                components={"points": float(soft.retained_count)},
                exchange=True,
            )
        )
        train_diff_ts(
            diff,
            soft,
            epochs=schedule.exchange_epochs,
            seed=phase_seed(schedule.seed, 3, round_),
            lambda2=schedule.lambda2,
            optimizer=diff_optimizer,
            on_epoch=log.epoch_callback(TrainingStage.DIFF_TS, round_),
        )
        labels = infer_database(diff, corpus, schedule.alpha, phase_seed(schedule.seed, 4, round_))
        log.append(
            TrainingLogRecord(
                stage=TrainingStage.AMPLIFIED_LABELS,
                round=round_,
                epoch=-1,
                components={"trajectories": float(len(labels))},
                exchange=True,
            )
        )
        train_gnn_ts(
            gnn,
            corpus,
            epochs=schedule.exchange_epochs,
            seed=phase_seed(schedule.seed, 5, round_),
            labels=labels,
            lambda3=schedule.lambda3,
            optimizer=gnn_optimizer,
            on_epoch=log.epoch_callback(TrainingStage.GNN_TS, round_),
        )
        logger.info(f"Round {round_} done: {len(labels)} trajectories carried amplified labels")

    return MutualLearningResult(importance_model=gnn, diffusion_model=diff, log=log.records)
