"""Trajectory, database and simplified-database models."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from trajsimp_core._compat import StrEnum
from functools import cached_property
from pathlib import Path
from trajsimp_core._compat import Self

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from ..exceptions import ContractError, DataError, InvalidArgumentError

logger = logging.getLogger(__name__)

# Column layout shared by the csv and parquet formats
COLUMNS = ("traj_id", "lon", "lat", "t")
PARQUET_FORMAT_VERSION = "1"


def _frozen(values: Iterable[float] | np.ndarray, dtype: type) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True).reshape(-1)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, slots=True)
class Point:
    """A GPS record: longitude ``x`` and latitude ``y`` in degrees, ``t`` in epoch seconds."""

    x: float
    y: float
    t: int


@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    An ordered sequence of points stored column-wise.

    The arrays are read-only copies, so a Trajectory is an immutable value. Invariants such as
    strictly increasing timestamps are checked by ``validate_database`` rather than on
    construction, because simplified trajectories may legitimately be short or empty.
    """

    id: str
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "x", _frozen(self.x, np.float64))
        object.__setattr__(self, "y", _frozen(self.y, np.float64))
        object.__setattr__(self, "t", _frozen(self.t, np.int64))
        if not (len(self.x) == len(self.y) == len(self.t)):
            raise ContractError(
                f"Trajectory {self.id}: column lengths differ "
                f"({len(self.x)}, {len(self.y)}, {len(self.t)})"
            )

    @classmethod
    def from_points(cls, traj_id: str, points: Sequence[Point]) -> Self:
        """Build a trajectory from a sequence of ``Point`` records."""
        return cls(
            id=traj_id,
            x=np.array([p.x for p in points], dtype=np.float64),
            y=np.array([p.y for p in points], dtype=np.float64),
            t=np.array([p.t for p in points], dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.t, other.t)
        )

    def point(self, index: int) -> Point:
        return Point(x=float(self.x[index]), y=float(self.y[index]), t=int(self.t[index]))

    @property
    def points(self) -> tuple[Point, ...]:
        return tuple(self.point(i) for i in range(len(self)))

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    def take(self, indices: Sequence[int] | np.ndarray) -> Trajectory:
        """Return the subsequence at ``indices`` (which must be strictly increasing)."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= len(self)):
            raise ContractError(f"Trajectory {self.id}: indices are not a valid subsequence")
        return Trajectory(id=self.id, x=self.x[idx], y=self.y[idx], t=self.t[idx])

    def window_mask(self, t_start: float, t_end: float) -> np.ndarray:
        return (self.t >= t_start) & (self.t <= t_end)

    def restrict(self, t_start: float, t_end: float) -> Trajectory:
        """Points with ``t_start <= t <= t_end``."""
        return self.take(np.flatnonzero(self.window_mask(t_start, t_end)))


def pad_with_endpoints(length: int, indices: np.ndarray) -> np.ndarray:
    """Retained ``indices`` of a trajectory of ``length`` points with its first and last added."""
    if length == 0:
        return np.asarray(indices, dtype=np.int64)
    ends = np.array([0, length - 1], dtype=np.int64)
    return np.union1d(np.asarray(indices, dtype=np.int64), ends)


@dataclass(frozen=True)
class BoundingBox:
    """Spatio-temporal extent of a database."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    t_min: float
    t_max: float


@dataclass(frozen=True)
class TrajectoryDatabase:
    """An ordered collection of trajectories; ``total_points`` is derived."""

    trajectories: tuple[Trajectory, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "trajectories", tuple(self.trajectories))

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self) -> Iterator[Trajectory]:
        return iter(self.trajectories)

    def __getitem__(self, traj_id: str) -> Trajectory:
        return self.by_id[traj_id]

    @cached_property
    def by_id(self) -> dict[str, Trajectory]:
        # first occurrence wins; duplicates are reported by validate_database
        mapping: dict[str, Trajectory] = {}
        for traj in self.trajectories:
            mapping.setdefault(traj.id, traj)
        return mapping

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.trajectories)

    @cached_property
    def total_points(self) -> int:
        return sum(len(t) for t in self.trajectories)

    @cached_property
    def lengths(self) -> np.ndarray:
        return np.array([len(t) for t in self.trajectories], dtype=np.int64)

    @cached_property
    def flat(self) -> FlatPoints:
        """All points concatenated, with their (trajectory position, point index) identity."""
        return FlatPoints.from_trajectories(self.trajectories)

    def point_locations(self) -> np.ndarray:
        """(total_points, 2) array of (trajectory position, point index) in database order."""
        flat = self.flat
        return np.column_stack([flat.position, flat.index])

    @property
    def reference_latitude(self) -> float:
        return float(self.flat.y.mean()) if self.total_points else 0.0

    @property
    def reference_longitude(self) -> float:
        return float(self.flat.x.mean()) if self.total_points else 0.0

    def bounding_box(self) -> BoundingBox:
        if self.total_points == 0:
            raise InvalidArgumentError("Bounding box of an empty database is undefined")
        flat = self.flat
        return BoundingBox(
            x_min=float(flat.x.min()),
            x_max=float(flat.x.max()),
            y_min=float(flat.y.min()),
            y_max=float(flat.y.max()),
            t_min=float(flat.t.min()),
            t_max=float(flat.t.max()),
        )

    # ------------------------------------------------------------------
    # Tabular conversions
    # ------------------------------------------------------------------

    def to_frame(self) -> pd.DataFrame:
        """One row per point with columns ``traj_id, lon, lat, t`` in database order."""
        flat = self.flat
        ids = np.repeat(np.array(self.ids, dtype=object), self.lengths)
        return pd.DataFrame(
            {
                "traj_id": pd.Series(ids, dtype=object),
                "lon": flat.x,
                "lat": flat.y,
                "t": flat.t,
            }
        )

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> Self:
        """
        Group rows into trajectories.

        Trajectories appear in order of first appearance of their id; rows keep file order
        within a trajectory.
        """
        missing = [c for c in COLUMNS if c not in df.columns]
        if missing:
            raise DataError(f"Missing columns: {', '.join(missing)}")
        trajectories = [
            Trajectory(
                id=str(traj_id),
                x=group["lon"].to_numpy(dtype=np.float64),
                y=group["lat"].to_numpy(dtype=np.float64),
                t=group["t"].to_numpy(dtype=np.int64),
            )
            for traj_id, group in df.groupby("traj_id", sort=False)
        ]
        return cls(trajectories=tuple(trajectories))

    def to_parquet(self, file_path: str | Path) -> None:
        """Save the database to Parquet with format metadata."""
        import pyarrow as pa
        import pyarrow.parquet as pq

        file_path = Path(file_path)
        table = pa.Table.from_pandas(self.to_frame(), preserve_index=False)

        metadata = {
            b"trajsimp_format_version": PARQUET_FORMAT_VERSION.encode(),
            b"trajectories": str(len(self)).encode(),
            b"total_points": str(self.total_points).encode(),
        }
        existing_metadata = table.schema.metadata or {}
        table = table.cast(table.schema.with_metadata({**existing_metadata, **metadata}))

        pq.write_table(table, file_path)
        logger.info(f"Saved {len(self)} trajectories ({self.total_points} points) to {file_path}")

    @classmethod
    def from_parquet(cls, file_path: str | Path) -> Self:
        """Load a database written by ``to_parquet``."""
        import pyarrow.parquet as pq

        file_path = Path(file_path)
        table = pq.read_table(file_path)
        metadata = table.schema.metadata or {}
        version = metadata.get(b"trajsimp_format_version", b"").decode()
        if version != PARQUET_FORMAT_VERSION:
            raise DataError(f"{file_path}: unsupported parquet format version {version!r}")

        df = table.to_pandas()
        df["traj_id"] = df["traj_id"].astype(str)
        db = cls.from_frame(df)
        logger.info(f"Loaded {len(db)} trajectories ({db.total_points} points) from {file_path}")
        return db


@dataclass(frozen=True)
class FlatPoints:
    """Column arrays over every point of a database, in database order."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    position: np.ndarray  # index of the owning trajectory in the database
    index: np.ndarray  # index of the point within its trajectory

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory]) -> Self:
        if not trajectories:
            empty_f = np.zeros(0, dtype=np.float64)
            empty_i = np.zeros(0, dtype=np.int64)
            return cls(x=empty_f, y=empty_f, t=empty_i, position=empty_i, index=empty_i)
        lengths = np.array([len(t) for t in trajectories], dtype=np.int64)
        return cls(
            x=np.concatenate([t.x for t in trajectories]),
            y=np.concatenate([t.y for t in trajectories]),
            t=np.concatenate([t.t for t in trajectories]),
            position=np.repeat(np.arange(len(trajectories), dtype=np.int64), lengths),
            index=np.concatenate([np.arange(n, dtype=np.int64) for n in lengths]),
        )

    def __len__(self) -> int:
        return len(self.t)


@dataclass(frozen=True)
class SimplifiedDatabase:
    """
    A simplified view of an original database.

    ``retained`` holds, per original trajectory (same order), the strictly increasing indices
    of the kept points. A trajectory may keep no points at all.
    """

    original: TrajectoryDatabase
    retained: tuple[np.ndarray, ...]
    compression_rate: float

    def __post_init__(self) -> None:
        if len(self.retained) != len(self.original):
            raise ContractError(
                f"Retained index sets ({len(self.retained)}) do not match "
                f"trajectories ({len(self.original)})"
            )
        frozen = []
        for traj, idx in zip(self.original, self.retained, strict=True):
            arr = _frozen(idx, np.int64)
            if arr.size and (arr[0] < 0 or arr[-1] >= len(traj) or np.any(np.diff(arr) <= 0)):
                raise ContractError(f"Trajectory {traj.id}: retained indices not a subsequence")
            frozen.append(arr)
        object.__setattr__(self, "retained", tuple(frozen))
        if not 0.0 < self.compression_rate <= 1.0:
            raise InvalidArgumentError(f"Compression rate {self.compression_rate} not in (0, 1]")

    @classmethod
    def from_selection(
        cls,
        original: TrajectoryDatabase,
        retained: Mapping[str, Sequence[int] | np.ndarray] | Sequence[Sequence[int] | np.ndarray],
        compression_rate: float | None = None,
    ) -> Self:
        """
        Build a simplified database from per-trajectory index selections.

        Args:
            original: The database that was simplified.
            retained: Index sets keyed by trajectory id, or aligned with ``original`` order.
                Indices are sorted and deduplicated.
            compression_rate: Target rate. When given, the retained count must equal
                ``compute_budget(total_points, compression_rate)``; when omitted it is derived
                from the retained count.

        Raises:
            ContractError: If the selection is not a valid subsequence or misses the budget.
        """
        if isinstance(retained, Mapping):
            unknown = set(retained) - set(original.ids)
            if unknown:
                raise ContractError(f"Unknown trajectory ids in selection: {sorted(unknown)[:5]}")
            arrays = [np.asarray(retained.get(t.id, ()), dtype=np.int64) for t in original]
        else:
            arrays = [np.asarray(r, dtype=np.int64) for r in retained]
        arrays = [np.unique(a) for a in arrays]

        count = int(sum(a.size for a in arrays))
        total = original.total_points
        if compression_rate is None:
            if count == 0 or total == 0:
                raise ContractError("Cannot derive a compression rate from an empty selection")
            compression_rate = count / total
        elif count != compute_budget(total, compression_rate):
            raise ContractError(
                f"Selection keeps {count} points but budget at cr={compression_rate} is "
                f"{compute_budget(total, compression_rate)}"
            )
        return cls(original=original, retained=tuple(arrays), compression_rate=compression_rate)

    @classmethod
    def identity(cls, original: TrajectoryDatabase) -> Self:
        return cls(
            original=original,
            retained=tuple(np.arange(len(t), dtype=np.int64) for t in original),
            compression_rate=1.0,
        )

    @property
    def retained_count(self) -> int:
        return int(sum(r.size for r in self.retained))

    def indices_for(self, traj_id: str) -> np.ndarray:
        return self.retained[self.original.ids.index(traj_id)]

    @cached_property
    def trajectories(self) -> tuple[Trajectory, ...]:
        return tuple(t.take(r) for t, r in zip(self.original, self.retained, strict=True))

    def as_database(self) -> TrajectoryDatabase:
        """The simplified trajectories as a database (empty trajectories included)."""
        return TrajectoryDatabase(trajectories=self.trajectories)

    def with_endpoints(self) -> tuple[np.ndarray, ...]:
        """Retained indices padded with each original's endpoints, for error evaluation."""
        return tuple(
            pad_with_endpoints(len(t), r) for t, r in zip(self.original, self.retained, strict=True)
        )


# ============================================================================
# Operations
# ============================================================================


def compute_budget(total_points: int, cr: float) -> int:
    """
    Number of points kept at compression rate ``cr``.

    Rounds half up and never returns less than one point.

    Raises:
        InvalidArgumentError: If ``cr`` is outside (0, 1] or ``total_points`` < 1.
    """
    if not (0.0 < cr <= 1.0) or math.isnan(cr):
        raise InvalidArgumentError(f"Compression rate {cr} not in (0, 1]")
    if total_points < 1:
        raise InvalidArgumentError(f"Total points must be at least 1, got {total_points}")
    return max(1, min(total_points, math.floor(cr * total_points + 0.5)))


class IssueKind(StrEnum):
    NON_FINITE = "non-finite"
    OUT_OF_RANGE = "out-of-range"
    NON_MONOTONE = "non-monotone"
    TOO_SHORT = "too-short"
    DUPLICATE_ID = "duplicate-id"


class ValidationIssue(BaseModel):
    """A single invariant violation."""

    trajectory_id: str = Field(description="Identifier of the offending trajectory")
    index: int | None = Field(default=None, description="Point index, if point-specific")
    kind: IssueKind = Field(description="Which invariant is violated")


class ValidationReport(BaseModel):
    """Result of ``validate_database``: empty ``issues`` means well-formed."""

    issues: list[ValidationIssue] = Field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def count(self, kind: IssueKind) -> int:
        return sum(1 for issue in self.issues if issue.kind == kind)


def validate_database(db: TrajectoryDatabase) -> ValidationReport:
    """List every Point/Trajectory invariant violation in ``db`` without modifying it."""
    issues: list[ValidationIssue] = []
    seen: set[str] = set()
    for traj in db:
        if traj.id in seen:
            issues.append(ValidationIssue(trajectory_id=traj.id, kind=IssueKind.DUPLICATE_ID))
        seen.add(traj.id)

        if len(traj) < 2:
            issues.append(ValidationIssue(trajectory_id=traj.id, kind=IssueKind.TOO_SHORT))

        finite = np.isfinite(traj.x) & np.isfinite(traj.y)
        for i in np.flatnonzero(~finite):
            issues.append(
                ValidationIssue(trajectory_id=traj.id, index=int(i), kind=IssueKind.NON_FINITE)
            )
        in_range = (np.abs(traj.x) <= 180.0) & (np.abs(traj.y) <= 90.0)
        for i in np.flatnonzero(finite & ~in_range):
            issues.append(
                ValidationIssue(trajectory_id=traj.id, index=int(i), kind=IssueKind.OUT_OF_RANGE)
            )
        # report the later point of each non-increasing pair
        for i in np.flatnonzero(np.diff(traj.t) <= 0):
            issues.append(
                ValidationIssue(
                    trajectory_id=traj.id, index=int(i) + 1, kind=IssueKind.NON_MONOTONE
                )
            )

    if issues:
        logger.debug(f"Validation found {len(issues)} issues in {len(db)} trajectories")
    return ValidationReport(issues=issues)
