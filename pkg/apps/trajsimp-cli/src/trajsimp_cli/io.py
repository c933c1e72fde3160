"""
Reading and writing trajectory files.

Supported inputs are csv (``traj_id,lon,lat,t``), GeoLife ``.plt`` files (a single file or a
directory searched recursively) and the library's parquet format. Outputs are csv, GeoJSON and
parquet, each written to a temporary sibling and moved into place.
"""

import json
import logging
import os
from collections import Counter
from collections.abc import Callable
from trajsimp_core._compat import StrEnum
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from trajsimp_core.exceptions import DataError
from trajsimp_core.schemas.trajectory import (
    COLUMNS,
    SimplifiedDatabase,
    Trajectory,
    TrajectoryDatabase,
)

logger = logging.getLogger(__name__)


class InputFormat(StrEnum):
    CSV = "csv"
    PLT = "plt"
    PARQUET = "parquet"


class ExportFormat(StrEnum):
    CSV = "csv"
    GEOJSON = "geojson"
    PARQUET = "parquet"


# GeoLife files start with six header lines before the records
PLT_HEADER_LINES = 6
PLT_COLUMNS = ("lat", "lon", "zero", "alt", "days", "date", "time")

_SUFFIX_FORMATS = {
    ".csv": InputFormat.CSV,
    ".plt": InputFormat.PLT,
    ".parquet": InputFormat.PARQUET,
    ".pq": InputFormat.PARQUET,
}


class SkipReason(StrEnum):
    MALFORMED = "malformed"
    OUT_OF_RANGE = "out-of-range"
    NON_MONOTONE = "non-monotone"
    TOO_SHORT = "too-short"
    DUPLICATE_ID = "duplicate-id"


class IngestReport(BaseModel):
    """What ``ingest`` kept and what it dropped."""

    source: str = Field(description="Path that was read")
    trajectories: int = Field(default=0, description="Trajectories kept")
    points: int = Field(default=0, description="Points kept")
    skipped_rows: dict[str, int] = Field(
        default_factory=dict, description="Skipped rows per reason"
    )
    skipped_trajectories: dict[str, int] = Field(
        default_factory=dict, description="Skipped trajectories per reason"
    )

    @property
    def total_skipped_rows(self) -> int:
        return sum(self.skipped_rows.values())


# ============================================================================
# Ingest
# ============================================================================


def infer_format(path: Path) -> InputFormat:
    """Input format from the suffix; a directory is taken to hold GeoLife files."""
    if path.is_dir():
        return InputFormat.PLT
    fmt = _SUFFIX_FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise DataError(f"Cannot infer the format of {path}; pass it explicitly")
    return fmt


def _clean_rows(
    df: pd.DataFrame, rows: Counter[str], trajectories: Counter[str]
) -> list[Trajectory]:
    """
    Drop invalid rows, then split the rest into trajectories in order of first appearance.

    A row is malformed when any column fails to parse; out of range when lon/lat leave
    [-180, 180] x [-90, 90]; non-monotone when its timestamp does not exceed every earlier
    timestamp of the same trajectory.
    """
    numeric = df[["lon", "lat", "t"]].apply(pd.to_numeric, errors="coerce")
    ids = df["traj_id"]
    malformed = ids.isna() | ~np.isfinite(numeric).all(axis=1)
    malformed |= numeric["t"].ne(np.floor(numeric["t"]))
    rows[SkipReason.MALFORMED] += int(malformed.sum())

    valid = ~malformed
    out_of_range = valid & ((numeric["lon"].abs() > 180.0) | (numeric["lat"].abs() > 90.0))
    rows[SkipReason.OUT_OF_RANGE] += int(out_of_range.sum())
    valid &= ~out_of_range

    kept = pd.DataFrame(
        {
            "traj_id": ids[valid].astype(str),
            "lon": numeric["lon"][valid].astype(np.float64),
            "lat": numeric["lat"][valid].astype(np.float64),
            "t": numeric["t"][valid].astype(np.int64),
        }
    )

    result: list[Trajectory] = []
    for traj_id, group in kept.groupby("traj_id", sort=False):
        t = group["t"].to_numpy()
        earlier_max = np.maximum.accumulate(np.concatenate([[np.iinfo(np.int64).min], t[:-1]]))
        monotone = t > earlier_max
        rows[SkipReason.NON_MONOTONE] += int((~monotone).sum())
        if monotone.sum() < 2:
            trajectories[SkipReason.TOO_SHORT] += 1
            continue
        result.append(
            Trajectory(
                id=str(traj_id),
                x=group["lon"].to_numpy()[monotone],
                y=group["lat"].to_numpy()[monotone],
                t=t[monotone],
            )
        )
    return result


def _read_csv(path: Path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"traj_id": str}, float_precision="round_trip")
    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing columns {', '.join(missing)}")
    return df[list(COLUMNS)]


def _read_plt_file(path: Path) -> pd.DataFrame:
    df = pd.read_csv(
        path,
        skiprows=PLT_HEADER_LINES,
        header=None,
        names=list(PLT_COLUMNS),
        dtype=str,
        on_bad_lines="skip",
        engine="python",
    )
    stamps = pd.to_datetime(
        df["date"].str.strip() + " " + df["time"].str.strip(),
        format="%Y-%m-%d %H:%M:%S",
        errors="coerce",
        utc=True,
    )
    seconds = (stamps - pd.Timestamp(0, tz="UTC")) // pd.Timedelta(seconds=1)
    return pd.DataFrame(
        {"traj_id": path.stem, "lon": df["lon"], "lat": df["lat"], "t": seconds}
    )


def _plt_files(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(path.rglob("*.plt"))
    return [path]


def ingest(
    path: Path, fmt: InputFormat | None = None
) -> tuple[TrajectoryDatabase, IngestReport]:
    """
    Read trajectories from ``path``, skipping and counting invalid rows and trajectories.

    Trajectories with fewer than two valid points are dropped as too short. With GeoLife input
    each file is one trajectory named after its stem; a repeated stem keeps the first file.

    Raises:
        DataError: If the path cannot be read or no valid trajectory remains.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Input not found: {path}")
    fmt = fmt or infer_format(path)
    rows: Counter[str] = Counter()
    dropped: Counter[str] = Counter()

    try:
        match fmt:
            case InputFormat.CSV:
                trajectories = _clean_rows(_read_csv(path), rows, dropped)
            case InputFormat.PARQUET:
                frame = TrajectoryDatabase.from_parquet(path).to_frame()
                trajectories = _clean_rows(frame, rows, dropped)
            case InputFormat.PLT:
                trajectories = []
                seen: set[str] = set()
                for file in _plt_files(path):
                    if file.stem in seen:
                        dropped[SkipReason.DUPLICATE_ID] += 1
                        continue
                    seen.add(file.stem)
                    trajectories.extend(_clean_rows(_read_plt_file(file), rows, dropped))
            case _:
                raise DataError(f"Unsupported input format: {fmt}")
    except (OSError, ValueError) as e:
        # pandas and pyarrow report unparsable content as ValueError subclasses
        raise DataError(f"Cannot read {path}: {e}") from e

    report = IngestReport(
        source=str(path),
        trajectories=len(trajectories),
        points=sum(len(t) for t in trajectories),
        skipped_rows={k: v for k, v in rows.items() if v},
        skipped_trajectories={k: v for k, v in dropped.items() if v},
    )
    if not trajectories:
        raise DataError(f"No valid trajectories in {path}")
    if report.total_skipped_rows or report.skipped_trajectories:
        logger.warning(
            f"Skipped rows {report.skipped_rows} and trajectories "
            f"{report.skipped_trajectories} while reading {path}"
        )
    logger.info(f"Ingested {report.trajectories} trajectories ({report.points} points) from {path}")
    return TrajectoryDatabase(trajectories=tuple(trajectories)), report


# ============================================================================
# Export
# ============================================================================


def _atomic_write(path: Path, write: Callable[[Path], None]) -> None:
    """Write through ``write`` into a temporary sibling, then move it over ``path``."""
    tmp = path.with_name(f".{path.name}.tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        write(tmp)
        os.replace(tmp, path)
    except OSError as e:
        tmp.unlink(missing_ok=True)
        raise DataError(f"Cannot write {path}: {e}") from e


def write_text(path: Path, text: str) -> None:
    _atomic_write(path, lambda tmp: tmp.write_text(text, encoding="utf-8"))


def geojson_features(db: TrajectoryDatabase) -> dict[str, Any]:
    """
    GeoJSON FeatureCollection with one feature per non-empty trajectory.

    Trajectories of two or more points are LineStrings, single points are Points. Timestamps
    travel in the ``t`` property, aligned with the coordinates.
    """
    features: list[dict[str, Any]] = []
    for traj in db:
        if traj.is_empty:
            continue
        coords = [[float(x), float(y)] for x, y in zip(traj.x, traj.y, strict=True)]
        geometry = (
            {"type": "LineString", "coordinates": coords}
            if len(coords) > 1
            else {"type": "Point", "coordinates": coords[0]}
        )
        features.append(
            {
                "type": "Feature",
                "geometry": geometry,
                "properties": {"traj_id": traj.id, "t": [int(t) for t in traj.t]},
            }
        )
    return {"type": "FeatureCollection", "features": features}


def export(db: TrajectoryDatabase | SimplifiedDatabase, path: Path, fmt: ExportFormat) -> Path:
    """
    Write ``db`` to ``path``. csv keeps full float precision so ingest reads it back exactly.

    Raises:
        DataError: If the file cannot be written.
    """
    if isinstance(db, SimplifiedDatabase):
        db = db.as_database()
    path = Path(path)

    match fmt:
        case ExportFormat.CSV:
            frame = db.to_frame()
            _atomic_write(path, lambda tmp: frame.to_csv(tmp, index=False, float_format="%.17g"))
        case ExportFormat.GEOJSON:
            write_text(path, json.dumps(geojson_features(db)))
        case ExportFormat.PARQUET:
            _atomic_write(path, db.to_parquet)
        case _:
            raise DataError(f"Unsupported export format: {fmt}")

    logger.info(f"Exported {len(db)} trajectories ({db.total_points} points) to {path}")
    return path
