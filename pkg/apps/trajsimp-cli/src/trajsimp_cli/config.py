"""
Pipeline configuration.

Settings come from, highest precedence first: ``--set section.key=value`` overrides, the TOML file
given with ``--config``, ``TRAJSIMP_``-prefixed environment variables (nested with ``__``, e.g.
``TRAJSIMP_SIMPLIFY__CR=0.02``) and the field defaults below.
"""

import json
import logging
from collections.abc import Sequence
from trajsimp_core._compat import StrEnum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict, TomlConfigSettingsSource
from trajsimp_core.algs.distance import DEFAULT_EDR_THRESHOLD_M, ErrorKind
from trajsimp_core.algs.queries import (
    DEFAULT_LINK_THRESHOLD,
    DEFAULT_SPATIAL_CELL_M,
    DEFAULT_TEMPORAL_CELL_S,
    DEFAULT_TICK_S,
)
from trajsimp_core.algs.workload import Distribution, QueryType, WorkloadSpec
from trajsimp_core.exceptions import DataError, InvalidArgumentError
from trajsimp_core.models.diff_ts import DiffTsConfig
from trajsimp_core.models.gnn_ts import GnnTsConfig
from trajsimp_core.models.mutual_learning import MlSchedule

from .io import InputFormat

logger = logging.getLogger(__name__)


class SamplingMode(StrEnum):
    """How the final ``m`` points are drawn from the adjusted importance."""

    WEIGHTED = "weighted"
    TOP_M = "top_m"


class SelectionScope(StrEnum):
    """Where the point budget applies: one draw over the database or one draw per trajectory."""

    DATABASE = "database"
    TRAJECTORY = "trajectory"


# ============================================================================
# Sections
# ============================================================================


class Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DataSection(Section):
    input: Path | None = Field(default=None, description="Trajectory file or directory")
    format: InputFormat | None = Field(
        default=None, description="Input format; inferred from the suffix when unset"
    )


class SimplifySection(Section):
    cr: float = Field(default=0.01, gt=0.0, le=1.0, description="Fraction of points retained")
    delta: float = Field(default=0.5, ge=0.0, le=1.0, description="Query adjustment ratio")
    sampling: SamplingMode = Field(default=SamplingMode.WEIGHTED, description="Selection mode")
    scope: SelectionScope = Field(
        default=SelectionScope.DATABASE,
        description="Sample over the whole database or within each trajectory at its share",
    )
    seed: int = Field(default=0, ge=0, description="Sampling seed")
    max_workers: int = Field(default=1, ge=1, description="Threads for importance prediction")


class WorkloadSection(Section):
    """Range-query workload and grid used to adjust importance before sampling."""

    queries: int = Field(default=100, ge=1, description="Range queries in the workload")
    grid_x: int = Field(default=10, ge=1, description="Adjustment grid cells along longitude")
    grid_y: int = Field(default=10, ge=1, description="Adjustment grid cells along latitude")
    grid_t: int = Field(default=8, ge=1, description="Adjustment grid cells along time")
    spatial_window_m: float = Field(default=2_000.0, gt=0, description="Query box side, meters")
    temporal_window_s: float = Field(default=7_200.0, gt=0, description="Query window, seconds")
    distribution: Distribution = Field(default=Distribution.DATA, description="Center sampling")
    seed: int = Field(default=0, ge=0, description="Workload seed")


class EvaluationSection(Section):
    query_types: list[QueryType] = Field(
        default_factory=lambda: list(QueryType), description="Query types to evaluate"
    )
    queries_per_type: int = Field(default=100, ge=1, description="Queries per query type")
    k: int = Field(default=3, ge=1, description="kNN result size")
    delta_m: float = Field(default=5_000.0, gt=0, description="Similarity distance bound")
    spatial_window_m: float = Field(default=2_000.0, gt=0, description="Query box side, meters")
    temporal_window_s: float = Field(default=7_200.0, gt=0, description="Query window, seconds")
    distribution: Distribution = Field(default=Distribution.DATA, description="Center sampling")
    error_kinds: list[ErrorKind] = Field(
        default_factory=lambda: [ErrorKind.SED, ErrorKind.PED], description="Errors to report"
    )
    seed: int = Field(default=1, ge=0, description="Evaluation workload seed")
    max_workers: int = Field(default=1, ge=1, description="Threads for query evaluation")


class IndexSection(Section):
    spatial_cell_m: float = Field(default=DEFAULT_SPATIAL_CELL_M, gt=0, description="Cell side")
    temporal_cell_s: float = Field(default=DEFAULT_TEMPORAL_CELL_S, gt=0, description="Cell span")
    edr_threshold_m: float = Field(
        default=DEFAULT_EDR_THRESHOLD_M, gt=0, description="EDR match threshold"
    )
    link_threshold: int = Field(
        default=DEFAULT_LINK_THRESHOLD, ge=0, description="Clustering link threshold (EDR)"
    )
    tick_s: float = Field(default=DEFAULT_TICK_S, gt=0, description="Similarity tick")


class PretrainSection(Section):
    epochs: int = Field(default=5, ge=1, description="Masked-cell pretraining epochs")
    seed: int = Field(default=0, ge=0, description="Pretraining shuffle and mask seed")


class LoggingSection(Section):
    level: str = Field(default="INFO", description="DEBUG, INFO, WARNING, ERROR or CRITICAL")
    color: bool = Field(default=True, description="Colored level names")
    show_module: bool = Field(default=False, description="Show logger names")


class OutputSection(Section):
    dir: Path = Field(default=Path("trajsimp-out"), description="Directory for every artifact")

    @property
    def database(self) -> Path:
        return self.dir / "database.parquet"

    @property
    def gnn_ts(self) -> Path:
        return self.dir / "gnn_ts.npz"

    @property
    def diff_ts(self) -> Path:
        return self.dir / "diff_ts.npz"

    @property
    def training_log(self) -> Path:
        return self.dir / "training.jsonl"

    @property
    def simplified(self) -> Path:
        return self.dir / "simplified.parquet"

    @property
    def report(self) -> Path:
        return self.dir / "report.json"


# ============================================================================
# Settings
# ============================================================================


class PipelineConfig(BaseSettings):
    """Every setting of the ingest → train → simplify → evaluate pipeline."""

    model_config = SettingsConfigDict(
        env_prefix="TRAJSIMP_", env_nested_delimiter="__", extra="forbid"
    )

    data: DataSection = Field(default_factory=DataSection)
    simplify: SimplifySection = Field(default_factory=SimplifySection)
    workload: WorkloadSection = Field(default_factory=WorkloadSection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)
    index: IndexSection = Field(default_factory=IndexSection)
    pretrain: PretrainSection = Field(default_factory=PretrainSection)
    importance: GnnTsConfig = Field(default_factory=GnnTsConfig, description="GNN-TS model")
    diffusion: DiffTsConfig = Field(default_factory=DiffTsConfig, description="Diff-TS model")
    mutual: MlSchedule = Field(default_factory=MlSchedule, description="Mutual-learning schedule")
    logging: LoggingSection = Field(default_factory=LoggingSection)
    output: OutputSection = Field(default_factory=OutputSection)

    def adjustment_spec(self) -> WorkloadSpec:
        """Range workload used for query-based importance adjustment."""
        return WorkloadSpec(
            query_type=QueryType.RANGE,
            count=self.workload.queries,
            distribution=self.workload.distribution,
            spatial_window_m=self.workload.spatial_window_m,
            temporal_window_s=self.workload.temporal_window_s,
            seed=self.workload.seed,
        )

    def evaluation_specs(self) -> list[WorkloadSpec]:
        """One workload spec per evaluated query type."""
        ev = self.evaluation
        return [
            WorkloadSpec(
                query_type=query_type,
                count=ev.queries_per_type,
                distribution=ev.distribution,
                spatial_window_m=ev.spatial_window_m,
                temporal_window_s=ev.temporal_window_s,
                k=ev.k,
                delta_m=ev.delta_m,
                edr_threshold_m=self.index.edr_threshold_m,
                link_threshold=self.index.link_threshold,
                tick_s=self.index.tick_s,
                seed=ev.seed + position,
            )
            for position, query_type in enumerate(ev.query_types)
        ]

    def diffusion_config(self) -> DiffTsConfig:
        """Diff-TS settings with the schedule's label size and diversity weight applied."""
        return self.diffusion.model_copy(
            update={"amplified_count": self.mutual.alpha, "lambda2": self.mutual.lambda2}
        )


# ============================================================================
# Loading
# ============================================================================


def parse_override(text: str) -> tuple[list[str], Any]:
    """
    Split ``section.key=value`` into its key path and value.

    The value is parsed as JSON when possible (numbers, booleans, lists) and kept as a string
    otherwise.
    """
    key, sep, raw = text.partition("=")
    path = [part.strip() for part in key.split(".")]
    if not sep or not all(path):
        raise InvalidArgumentError(f"Override {text!r} is not of the form section.key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return path, value


def _deep_set(target: dict[str, Any], path: list[str], value: Any) -> None:
    node = target
    for part in path[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[path[-1]] = value


def _read_toml(path: Path) -> dict[str, Any]:
    if not path.is_file():
        raise DataError(f"Config file not found: {path}")
    try:
        return TomlConfigSettingsSource(PipelineConfig, toml_file=path)()
    except ValueError as e:
        # tomllib.TOMLDecodeError derives from ValueError
        raise DataError(f"{path}: invalid TOML ({e})") from e


def load_config(
    config_file: Path | None = None, overrides: Sequence[str] = ()
) -> PipelineConfig:
    """
    Build the pipeline configuration from a TOML file, overrides and the environment.

    Raises:
        DataError: If ``config_file`` is missing or not valid TOML.
        InvalidArgumentError: If an override is malformed or any value fails validation.
    """
    values: dict[str, Any] = _read_toml(config_file) if config_file else {}
    for text in overrides:
        path, value = parse_override(text)
        _deep_set(values, path, value)
    try:
        config = PipelineConfig(**values)
    except ValidationError as e:
        raise InvalidArgumentError(f"Invalid configuration: {e}") from e
    logger.debug(f"Loaded configuration (file={config_file}, {len(overrides)} overrides)")
    return config
