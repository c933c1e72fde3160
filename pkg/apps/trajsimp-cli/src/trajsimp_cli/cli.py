"""Command-line interface for the query-driven trajectory simplification pipeline."""

import functools
import logging
from collections.abc import Callable
from pathlib import Path
from typing import Annotated, ParamSpec, TypeVar

import typer
from trajsimp_core.algs.baselines import BaselineMethod, BaselineSpec, run_baseline
from trajsimp_core.algs.distance import ErrorKind
from trajsimp_core.exceptions import (
    DataError,
    ErrorCategory,
    InvalidArgumentError,
    TrajSimpError,
)
from trajsimp_core.models.diff_ts import DiffusionModel
from trajsimp_core.models.gnn_ts import ImportanceModel, pretrain_mlm
from trajsimp_core.models.mutual_learning import TrainingLogRecord, run_mutual_learning
from trajsimp_core.schemas.trajectory import TrajectoryDatabase
from trajsimp_core.viz import create_f1_chart, create_loss_chart, create_simplification_map

from . import pipeline
from .config import PipelineConfig, load_config
from .io import ExportFormat, InputFormat, export, ingest, write_text
from .logging_config import setup_logging

logger = logging.getLogger(__name__)

app = typer.Typer(help="Query-driven trajectory simplification pipeline", no_args_is_help=True)

EXIT_CODES = {
    ErrorCategory.INVALID_ARGUMENT: 2,
    ErrorCategory.CONTRACT: 3,
    ErrorCategory.DATA: 4,
    ErrorCategory.NUMERICAL: 5,
    ErrorCategory.CHECKPOINT: 6,
    ErrorCategory.DEGENERATE_GEOMETRY: 7,
}
UNEXPECTED_EXIT_CODE = 1

P = ParamSpec("P")
R = TypeVar("R")


def handle_errors(func: Callable[P, R]) -> Callable[P, R]:
    """Turn library errors into a one-line message and the category's exit code."""

    @functools.wraps(func)
    def wrapper(*args: P.args, **kwargs: P.kwargs) -> R:
        try:
            return func(*args, **kwargs)
        except typer.Exit:
            raise
        except TrajSimpError as e:
            typer.echo(f"Error [{e.category}]: {e.message}", err=True)
            raise typer.Exit(EXIT_CODES.get(e.category, UNEXPECTED_EXIT_CODE)) from e
        except Exception as e:
            logger.exception("Unexpected failure")
            typer.echo(f"Error: {e}", err=True)
            raise typer.Exit(UNEXPECTED_EXIT_CODE) from e

    return wrapper


def _config(ctx: typer.Context) -> PipelineConfig:
    return ctx.ensure_object(PipelineConfig)


def _load_database(path: Path) -> TrajectoryDatabase:
    if not path.is_file():
        raise DataError(f"Database not found: {path} (run `trajsimp ingest` first)")
    try:
        return TrajectoryDatabase.from_parquet(path)
    except (OSError, ValueError) as e:
        raise DataError(f"Cannot read {path}: {e}") from e


def _export_format(path: Path, fmt: ExportFormat | None) -> ExportFormat:
    if fmt is not None:
        return fmt
    try:
        return ExportFormat(path.suffix.lower().lstrip("."))
    except ValueError as e:
        raise InvalidArgumentError(f"Cannot infer the export format of {path}") from e


@app.callback()
@handle_errors
def main(
    ctx: typer.Context,
    config_file: Annotated[
        Path | None, typer.Option("--config", "-c", help="TOML configuration file")
    ] = None,
    overrides: Annotated[
        list[str] | None,
        typer.Option("--set", help="Override one setting, e.g. --set simplify.cr=0.02"),
    ] = None,
    verbose: Annotated[bool, typer.Option("--verbose", "-v", help="Debug logging")] = False,
    quiet: Annotated[bool, typer.Option("--quiet", "-q", help="Warnings and errors only")] = False,
) -> None:
    """Load the configuration shared by every command and set up logging."""
    config = load_config(config_file, overrides or [])
    level = "DEBUG" if verbose else "WARNING" if quiet else config.logging.level
    setup_logging(level, use_color=config.logging.color, show_module=config.logging.show_module)
    ctx.obj = config


# ============================================================================
# Data
# ============================================================================


@app.command(name="ingest")
@handle_errors
def ingest_command(
    ctx: typer.Context,
    source: Annotated[
        Path | None, typer.Argument(help="csv/parquet file, .plt file or GeoLife directory")
    ] = None,
    fmt: Annotated[InputFormat | None, typer.Option("--format", help="Input format")] = None,
    output: Annotated[Path | None, typer.Option("--output", "-o", help="Database file")] = None,
) -> None:
    """Read raw trajectories, drop invalid rows and save the database."""
    config = _config(ctx)
    source = source or config.data.input
    if source is None:
        raise InvalidArgumentError("No input given (argument or data.input)")
    db, report = ingest(source, fmt or config.data.format)
    target = export(db, output or config.output.database, ExportFormat.PARQUET)

    typer.echo(f"Ingested {report.trajectories} trajectories ({report.points} points) -> {target}")
    for reason, count in {**report.skipped_rows, **report.skipped_trajectories}.items():
        typer.echo(f"  skipped ({reason}): {count}")


@app.command(name="export")
@handle_errors
def export_command(
    source: Annotated[Path, typer.Argument(help="Database or simplified database (parquet)")],
    output: Annotated[Path, typer.Argument(help="Output file")],
    fmt: Annotated[
        ExportFormat | None, typer.Option("--format", help="Output format (default: suffix)")
    ] = None,
) -> None:
    """Convert a database to csv, GeoJSON or parquet."""
    target = export(_load_database(source), output, _export_format(output, fmt))
    typer.echo(f"Wrote {target}")


# ============================================================================
# Training
# ============================================================================


@app.command()
@handle_errors
def pretrain(ctx: typer.Context) -> None:
    """Masked-cell pretraining of the GNN-TS trajectory encoder."""
    config = _config(ctx)
    db = _load_database(config.output.database)
    model = ImportanceModel.for_corpus(db, config.importance)
    history = pretrain_mlm(
        model.tbert, db, epochs=config.pretrain.epochs, seed=config.pretrain.seed
    )
    path = model.save(config.output.gnn_ts)
    typer.echo(f"Pretrained {len(history)} epochs (final loss {history[-1].loss:.4f}) -> {path}")


def _loss_series(records: list[TrainingLogRecord]) -> dict[str, list[float]]:
    series: dict[str, list[float]] = {}
    for record in records:
        if record.loss is not None:
            series.setdefault(str(record.stage), []).append(record.loss)
    return series


@app.command()
@handle_errors
def train(ctx: typer.Context) -> None:
    """Mutual learning of GNN-TS and Diff-TS, starting from the pretrained encoder if present."""
    config = _config(ctx)
    db = _load_database(config.output.database)
    if config.output.gnn_ts.is_file():
        importance_model = ImportanceModel.load(config.output.gnn_ts)
        logger.info(f"Starting from pretrained checkpoint {config.output.gnn_ts}")
        # loss switches come from the current settings, architecture from the checkpoint
        importance_model.config = importance_model.config.model_copy(
            update={"use_contrastive": config.importance.use_contrastive}
        )
    else:
        importance_model = ImportanceModel.for_corpus(db, config.importance)
    diffusion_model = DiffusionModel(importance_model.vocab, config.diffusion_config())

    result = run_mutual_learning(
        db,
        config.mutual,
        importance_model,
        diffusion_model,
        log_path=config.output.training_log,
    )
    result.importance_model.save(config.output.gnn_ts)
    result.diffusion_model.save(config.output.diff_ts)

    chart = config.output.dir / "training.html"
    create_loss_chart(_loss_series(result.log)).write_html(chart)
    typer.echo(
        f"Trained on {len(db)} trajectories: {len(result.log)} log records -> "
        f"{config.output.gnn_ts}, {config.output.diff_ts}"
    )


# ============================================================================
# Simplification
# ============================================================================


@app.command(name="simplify")
@handle_errors
def simplify_command(
    ctx: typer.Context,
    output: Annotated[Path | None, typer.Option("--output", "-o", help="Output file")] = None,
) -> None:
    """Simplify the database with the trained GNN-TS and query-based adjustment."""
    config = _config(ctx)
    db = _load_database(config.output.database)
    model = ImportanceModel.load(config.output.gnn_ts)
    simplified = pipeline.simplify(db, model, config)
    target = export(simplified, output or config.output.simplified, ExportFormat.PARQUET)
    typer.echo(f"Kept {simplified.retained_count} of {db.total_points} points -> {target}")


@app.command()
@handle_errors
def baseline(
    ctx: typer.Context,
    method: Annotated[BaselineMethod, typer.Argument(help="Baseline algorithm")],
    error_kind: Annotated[
        ErrorKind, typer.Option("--error", help="Error driving the greedy baselines")
    ] = ErrorKind.PED,
    output: Annotated[Path | None, typer.Option("--output", "-o", help="Output file")] = None,
) -> None:
    """Simplify the database with an error-driven or sampling baseline at the same budget."""
    config = _config(ctx)
    db = _load_database(config.output.database)
    spec = BaselineSpec(
        method=method,
        error_kind=error_kind,
        compression_rate=config.simplify.cr,
        seed=config.simplify.seed,
    )
    simplified = run_baseline(db, spec)
    target = output or config.output.dir / f"baseline_{method}.parquet"
    export(simplified, target, ExportFormat.PARQUET)
    typer.echo(
        f"{method}: kept {simplified.retained_count} of {db.total_points} points -> {target}"
    )


# ============================================================================
# Evaluation
# ============================================================================


@app.command(name="evaluate")
@handle_errors
def evaluate_command(
    ctx: typer.Context,
    simplified: Annotated[Path, typer.Argument(help="Simplified database (parquet)")],
    report_path: Annotated[
        Path | None, typer.Option("--report", help="JSON report file")
    ] = None,
) -> None:
    """Score a simplified database by query F1 and simplification error."""
    config = _config(ctx)
    db = _load_database(config.output.database)
    recovered = pipeline.recover_simplification(db, _load_database(simplified))
    report = pipeline.evaluate(
        db,
        recovered,
        config.evaluation_specs(),
        error_kinds=config.evaluation.error_kinds,
        max_workers=config.evaluation.max_workers,
    )

    typer.echo(pipeline.render_table(report))
    target = report_path or config.output.report
    write_text(target, report.model_dump_json(indent=2))
    quality = {simplified.stem: report.quality()}
    create_f1_chart(quality).write_html(target.with_suffix(".html"))
    typer.echo(f"\nReport -> {target}")


@app.command()
@handle_errors
def visualize(
    ctx: typer.Context,
    simplified: Annotated[
        Path | None, typer.Option("--simplified", help="Simplified database to overlay")
    ] = None,
    importance: Annotated[
        bool, typer.Option("--importance", help="Color points by the trained model's importance")
    ] = False,
    max_trajectories: Annotated[
        int, typer.Option("--max-trajectories", min=1, help="Trajectories drawn")
    ] = 50,
    output: Annotated[Path | None, typer.Option("--output", "-o", help="HTML file")] = None,
) -> None:
    """Render an interactive map of the database and an optional simplification."""
    config = _config(ctx)
    db = _load_database(config.output.database)
    overlay = (
        pipeline.recover_simplification(db, _load_database(simplified)) if simplified else None
    )
    scores = None
    if importance:
        scores = pipeline.score_database(db, ImportanceModel.load(config.output.gnn_ts), config)

    fig = create_simplification_map(db, overlay, scores, max_trajectories=max_trajectories)
    target = output or config.output.dir / "map.html"
    target.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(target)
    typer.echo(f"Wrote {target}")


if __name__ == "__main__":
    app()
