"""
Geometric distances and simplification errors.

Distances are computed in a local planar frame. ``Projection.for_database`` gives the
equirectangular projection about a database's mean latitude (meters); ``PLANAR`` treats the
coordinates as already planar, which is what the unit examples use.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from trajsimp_core._compat import StrEnum
from trajsimp_core._compat import Self

import numpy as np

from ..exceptions import ContractError, DegenerateGeometryError, InvalidArgumentError
from ..schemas.trajectory import Point, Trajectory, TrajectoryDatabase

logger = logging.getLogger(__name__)

# Earth radius in meters
EARTH_RADIUS_M = 6_371_000

# EDR match threshold per axis, meters
DEFAULT_EDR_THRESHOLD_M = 2_000.0

# Planar tolerance below which a point counts as lying on a segment
ON_SEGMENT_TOLERANCE = 1e-9


class ErrorKind(StrEnum):
    """Per-point simplification error metrics."""

    PED = "ped"  # perpendicular distance to the anchor segment
    SED = "sed"  # distance to the time-synchronized position on the anchor segment
    DAD = "dad"  # heading difference to the anchor segment


# ============================================================================
# Projection
# ============================================================================


@dataclass(frozen=True)
class Projection:
    """Equirectangular projection about a reference point, or the identity when ``planar``."""

    ref_lat: float = 0.0
    ref_lon: float = 0.0
    planar: bool = False

    @classmethod
    def equirectangular(cls, ref_lat: float, ref_lon: float = 0.0) -> Self:
        return cls(ref_lat=ref_lat, ref_lon=ref_lon, planar=False)

    @classmethod
    def for_database(cls, db: TrajectoryDatabase) -> Self:
        """Projection about the database's mean latitude and longitude."""
        return cls.equirectangular(db.reference_latitude, db.reference_longitude)

    @classmethod
    def for_trajectories(cls, *trajectories: Trajectory) -> Self:
        """Projection about the mean latitude and longitude of the given trajectories' points."""
        ys = np.concatenate([t.y for t in trajectories]) if trajectories else np.empty(0)
        xs = np.concatenate([t.x for t in trajectories]) if trajectories else np.empty(0)
        if ys.size == 0:
            return cls.equirectangular(0.0)
        return cls.equirectangular(float(ys.mean()), float(xs.mean()))

    @property
    def meters_per_degree_y(self) -> float:
        return 1.0 if self.planar else EARTH_RADIUS_M * math.pi / 180.0

    @property
    def meters_per_degree_x(self) -> float:
        if self.planar:
            return 1.0
        return EARTH_RADIUS_M * math.pi / 180.0 * math.cos(math.radians(self.ref_lat))

    def forward(
        self, x: np.ndarray | float, y: np.ndarray | float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Degrees to planar meters (identity when planar)."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.planar:
            return x, y
        px = (x - self.ref_lon) * self.meters_per_degree_x
        py = (y - self.ref_lat) * self.meters_per_degree_y
        return px, py

    def inverse(
        self, px: np.ndarray | float, py: np.ndarray | float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Planar meters back to degrees."""
        px = np.asarray(px, dtype=np.float64)
        py = np.asarray(py, dtype=np.float64)
        if self.planar:
            return px, py
        x = px / self.meters_per_degree_x + self.ref_lon
        y = py / self.meters_per_degree_y + self.ref_lat
        return x, y

    def project(self, traj: Trajectory) -> ProjectedTrajectory:
        px, py = self.forward(traj.x, traj.y)
        return ProjectedTrajectory(px=px, py=py, t=traj.t.astype(np.float64))


PLANAR = Projection(planar=True)


@dataclass(frozen=True)
class ProjectedTrajectory:
    """Planar coordinates (meters) and timestamps of one trajectory."""

    px: np.ndarray
    py: np.ndarray
    t: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def xy(self) -> np.ndarray:
        return np.column_stack([self.px, self.py])


# ============================================================================
# Anchor segments
# ============================================================================


@dataclass(frozen=True)
class AnchorSegment:
    """
    Segment between two consecutive retained points.

    Covers original indices ``first_covered`` to ``last_covered`` inclusive: every index from the
    segment start up to (not including) the next retained index, plus the final original index
    for the last segment.
    """

    start: Point
    end: Point
    start_index: int
    end_index: int
    first_covered: int
    last_covered: int

    def covers(self, index: int) -> bool:
        return self.first_covered <= index <= self.last_covered


def subsequence_indices(original: Trajectory, simplified: Trajectory) -> np.ndarray:
    """
    Recover the strictly increasing index map of ``simplified`` into ``original``.

    Raises:
        ContractError: If some simplified point does not reproduce an original point exactly,
            or the order is not preserved.
    """
    if len(simplified) == 0:
        return np.zeros(0, dtype=np.int64)
    positions = np.searchsorted(original.t, simplified.t)
    if np.any(positions >= len(original)):
        raise ContractError(f"Trajectory {simplified.id}: not a subsequence of {original.id}")
    exact = (
        (original.t[positions] == simplified.t)
        & (original.x[positions] == simplified.x)
        & (original.y[positions] == simplified.y)
    )
    if not exact.all() or np.any(np.diff(positions) <= 0):
        raise ContractError(f"Trajectory {simplified.id}: not a subsequence of {original.id}")
    return positions.astype(np.int64)


def _check_anchored(length: int, retained: np.ndarray) -> None:
    if len(retained) < 2 or retained[0] != 0 or retained[-1] != length - 1:
        raise ContractError("Simplified trajectory must retain the original's first and last point")


def _segment_of(length: int, retained: np.ndarray) -> np.ndarray:
    """Anchor segment number for each original index."""
    seg = np.searchsorted(retained, np.arange(length), side="right") - 1
    return np.minimum(seg, len(retained) - 2)


def anchor_segments(original: Trajectory, simplified: Trajectory) -> list[AnchorSegment]:
    """
    Anchor segments of ``simplified`` with respect to ``original``.

    Raises:
        ContractError: If ``simplified`` is not a subsequence sharing the original's endpoints.
    """
    retained = subsequence_indices(original, simplified)
    _check_anchored(len(original), retained)
    segments: list[AnchorSegment] = []
    last = len(retained) - 2
    for j in range(len(retained) - 1):
        s, e = int(retained[j]), int(retained[j + 1])
        segments.append(
            AnchorSegment(
                start=original.point(s),
                end=original.point(e),
                start_index=s,
                end_index=e,
                first_covered=s,
                last_covered=e if j == last else e - 1,
            )
        )
    return segments


# ============================================================================
# Per-point distances (scalar)
# ============================================================================


def _planar(p: Point, projection: Projection) -> tuple[float, float]:
    px, py = projection.forward(p.x, p.y)
    return float(px), float(py)


def ped(p: Point, seg: AnchorSegment, projection: Projection = PLANAR) -> float:
    """Distance from ``p`` to the anchor segment, clamped to the segment endpoints."""
    x, y = _planar(p, projection)
    x1, y1 = _planar(seg.start, projection)
    x2, y2 = _planar(seg.end, projection)
    dx, dy = x2 - x1, y2 - y1
    length_sq = dx * dx + dy * dy
    if length_sq == 0.0:
        return math.hypot(x - x1, y - y1)
    u = max(0.0, min(1.0, ((x - x1) * dx + (y - y1) * dy) / length_sq))
    return math.hypot(x - (x1 + u * dx), y - (y1 + u * dy))


def sed(p: Point, seg: AnchorSegment, projection: Projection = PLANAR) -> float:
    """
    Synchronized Euclidean distance of ``p`` to its time-interpolated position on ``seg``.

    Raises:
        DegenerateGeometryError: If the segment has zero duration.
        ContractError: If ``p.t`` falls outside the segment's time span.
    """
    if seg.start.t == seg.end.t:
        raise DegenerateGeometryError(f"Anchor segment at t={seg.start.t} has zero duration")
    if not seg.start.t <= p.t <= seg.end.t:
        raise ContractError(f"Point at t={p.t} outside segment [{seg.start.t}, {seg.end.t}]")
    x, y = _planar(p, projection)
    x1, y1 = _planar(seg.start, projection)
    x2, y2 = _planar(seg.end, projection)
    ratio = (p.t - seg.start.t) / (seg.end.t - seg.start.t)
    return math.hypot(x - (x1 + (x2 - x1) * ratio), y - (y1 + (y2 - y1) * ratio))


def _angle_between(a: float, b: float) -> float:
    diff = abs(a - b) % (2.0 * math.pi)
    return min(diff, 2.0 * math.pi - diff)


def dad(
    p_index: int, original: Trajectory, seg: AnchorSegment, projection: Projection = PLANAR
) -> float:
    """
    Heading difference in ``[0, pi]`` between ``p_i -> p_{i+1}`` and the anchor segment.

    Raises:
        ContractError: If ``p_index`` has no successor.
        DegenerateGeometryError: If either heading vector has zero length.
    """
    if not 0 <= p_index < len(original) - 1:
        raise ContractError(f"Point {p_index} of {original.id} has no successor")
    x1, y1 = _planar(original.point(p_index), projection)
    x2, y2 = _planar(original.point(p_index + 1), projection)
    s1, t1 = _planar(seg.start, projection)
    s2, t2 = _planar(seg.end, projection)
    if (x1, y1) == (x2, y2) or (s1, t1) == (s2, t2):
        raise DegenerateGeometryError(f"Zero-length heading at point {p_index} of {original.id}")
    return _angle_between(math.atan2(y2 - y1, x2 - x1), math.atan2(t2 - t1, s2 - s1))


# ============================================================================
# Vectorised errors
# ============================================================================


def chord_errors(
    traj: ProjectedTrajectory,
    start: int,
    end: int,
    kind: ErrorKind,
    strict: bool = True,
) -> np.ndarray:
    """
    Per-point error of indices ``start..end`` (inclusive) against the chord ``start -> end``.

    The entry for ``end`` is always 0: its own error belongs to the following segment. With
    ``strict=False`` degenerate DAD headings are tolerated: zero-length point headings count as
    0 and a zero-length chord counts as a full reversal (pi) for every moving heading.

    Raises:
        DegenerateGeometryError: In strict mode, for zero-duration chords (SED) or zero-length
            headings (DAD).
    """
    idx = np.arange(start, end + 1)
    x, y, t = traj.px[idx], traj.py[idx], traj.t[idx]
    x1, y1, x2, y2 = traj.px[start], traj.py[start], traj.px[end], traj.py[end]
    dx, dy = x2 - x1, y2 - y1
    errors = np.zeros(len(idx), dtype=np.float64)
    if end - start < 1:
        return errors

    if kind is ErrorKind.PED:
        length_sq = dx * dx + dy * dy
        if length_sq == 0.0:
            errors = np.hypot(x - x1, y - y1)
        else:
            u = np.clip(((x - x1) * dx + (y - y1) * dy) / length_sq, 0.0, 1.0)
            errors = np.hypot(x - (x1 + u * dx), y - (y1 + u * dy))
    elif kind is ErrorKind.SED:
        duration = traj.t[end] - traj.t[start]
        if duration == 0:
            raise DegenerateGeometryError(f"Chord {start}->{end} has zero duration")
        ratio = (t - traj.t[start]) / duration
        errors = np.hypot(x - (x1 + dx * ratio), y - (y1 + dy * ratio))
    else:
        hx = traj.px[idx[:-1] + 1] - x[:-1]
        hy = traj.py[idx[:-1] + 1] - y[:-1]
        moving = (hx != 0.0) | (hy != 0.0)
        if strict and (not moving.all() or (dx == 0.0 and dy == 0.0)):
            raise DegenerateGeometryError(f"Zero-length heading within chord {start}->{end}")
        if dx == 0.0 and dy == 0.0:
            errors[:-1] = np.where(moving, math.pi, 0.0)
        else:
            diff = np.abs(np.arctan2(hy, hx) - math.atan2(dy, dx)) % (2.0 * math.pi)
            errors[:-1] = np.where(moving, np.minimum(diff, 2.0 * math.pi - diff), 0.0)
    errors[-1] = 0.0
    return errors


def point_errors(
    original: Trajectory,
    retained: np.ndarray,
    kind: ErrorKind,
    projection: Projection = PLANAR,
) -> np.ndarray:
    """
    Error of every original point against its anchor segment.

    ``retained`` must include the first and last original index.
    """
    retained = np.asarray(retained, dtype=np.int64)
    _check_anchored(len(original), retained)
    traj = projection.project(original)
    errors = np.zeros(len(original), dtype=np.float64)
    for s, e in zip(retained[:-1], retained[1:], strict=True):
        errors[s:e] = chord_errors(traj, int(s), int(e), kind)[:-1]
    return errors


def simplification_error(
    original: Trajectory,
    simplified: Trajectory,
    kind: ErrorKind,
    projection: Projection = PLANAR,
) -> float:
    """Maximum per-point error over all anchor segments (0 for an unsimplified trajectory)."""
    retained = subsequence_indices(original, simplified)
    return float(point_errors(original, retained, kind, projection).max(initial=0.0))


# ============================================================================
# EDR
# ============================================================================


def edr_planar(a: np.ndarray, b: np.ndarray, match_threshold: float) -> int:
    """
    Edit distance on real sequences between planar point arrays of shape (n, 2) and (m, 2).

    Two points match when both coordinate deltas are within ``match_threshold``. Rows of the
    dynamic program are computed vectorised: the horizontal (insertion) recurrence
    ``C[j] = min(T[j], C[j-1] + 1)`` is ``j + cummin(T[k] - k)``.
    """
    if match_threshold <= 0:
        raise InvalidArgumentError(f"EDR threshold must be positive, got {match_threshold}")
    n, m = len(a), len(b)
    if n == 0 or m == 0:
        return max(n, m)
    match = (np.abs(a[:, None, 0] - b[None, :, 0]) <= match_threshold) & (
        np.abs(a[:, None, 1] - b[None, :, 1]) <= match_threshold
    )
    sub = np.where(match, 0, 1).astype(np.int64)
    cols = np.arange(m + 1, dtype=np.int64)
    prev = cols.copy()
    for i in range(1, n + 1):
        candidate = np.empty(m + 1, dtype=np.int64)
        candidate[0] = i
        candidate[1:] = np.minimum(prev[1:] + 1, prev[:-1] + sub[i - 1])
        prev = np.minimum.accumulate(candidate - cols) + cols
    return int(prev[m])


def edr(
    a: Trajectory,
    b: Trajectory,
    match_threshold: float = DEFAULT_EDR_THRESHOLD_M,
    projection: Projection | None = None,
) -> int:
    """EDR between two trajectories (threshold in the projection's units).

    Without a projection both are projected to meters about their joint mean position.
    """
    projection = projection or Projection.for_trajectories(a, b)
    return edr_planar(projection.project(a).xy(), projection.project(b).xy(), match_threshold)
