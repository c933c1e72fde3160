"""Per-point importance scores."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from trajsimp_core._compat import Self

import numpy as np

from ..exceptions import ContractError, InvalidArgumentError
from .trajectory import TrajectoryDatabase

# Zero-elimination constant added to raw importance and used as the normalization margin
DEFAULT_EPSILON = 1e-6


def normalize_min_max(values: np.ndarray, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """
    Min-max normalize ``values`` into ``[epsilon, 1 - epsilon]``.

    The minimum maps to ``epsilon`` and the maximum to ``1 - epsilon``. A constant input maps to
    0.5 everywhere.
    """
    if not 0.0 < epsilon < 0.5:
        raise InvalidArgumentError(f"epsilon must be in (0, 0.5), got {epsilon}")
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values.copy()
    low, high = float(values.min()), float(values.max())
    if high == low:
        return np.full_like(values, 0.5)
    return epsilon + (1.0 - 2.0 * epsilon) * (values - low) / (high - low)


@dataclass(frozen=True, slots=True)
class PointImportance:
    raw: float
    normalized: float
    adjusted: float


@dataclass(frozen=True)
class ImportanceVector:
    """
    Raw, normalized and adjusted importance for every point of a database.

    Arrays are aligned with the database's trajectory order; entry ``(traj_id, i)`` refers to
    point ``i`` of trajectory ``traj_id``.
    """

    ids: tuple[str, ...]
    raw: tuple[np.ndarray, ...]
    normalized: tuple[np.ndarray, ...]
    adjusted: tuple[np.ndarray, ...]
    epsilon: float = DEFAULT_EPSILON

    @classmethod
    def from_raw(
        cls,
        db: TrajectoryDatabase,
        raw: Sequence[np.ndarray],
        epsilon: float = DEFAULT_EPSILON,
    ) -> Self:
        """Normalize raw scores over the whole database; ``adjusted`` starts equal to it."""
        if len(raw) != len(db):
            raise ContractError(f"Got {len(raw)} raw arrays for {len(db)} trajectories")
        for traj, scores in zip(db, raw, strict=True):
            if len(scores) != len(traj):
                raise ContractError(
                    f"Trajectory {traj.id}: {len(scores)} scores for {len(traj)} points"
                )
        raw_arrays = [np.asarray(r, dtype=np.float64) for r in raw]
        flat_raw = np.concatenate(raw_arrays) if raw_arrays else np.zeros(0)
        flat_norm = normalize_min_max(flat_raw, epsilon)
        normalized = _split(flat_norm, db.lengths)
        return cls(
            ids=db.ids,
            raw=tuple(raw_arrays),
            normalized=normalized,
            adjusted=normalized,
            epsilon=epsilon,
        )

    def __len__(self) -> int:
        return int(sum(len(r) for r in self.raw))

    def __getitem__(self, key: tuple[str, int]) -> PointImportance:
        traj_id, index = key
        pos = self.ids.index(traj_id)
        return PointImportance(
            raw=float(self.raw[pos][index]),
            normalized=float(self.normalized[pos][index]),
            adjusted=float(self.adjusted[pos][index]),
        )

    def flat_normalized(self) -> np.ndarray:
        return np.concatenate(self.normalized) if self.normalized else np.zeros(0)

    def flat_adjusted(self) -> np.ndarray:
        return np.concatenate(self.adjusted) if self.adjusted else np.zeros(0)

    def with_adjusted(self, flat_adjusted: np.ndarray) -> ImportanceVector:
        lengths = np.array([len(r) for r in self.raw], dtype=np.int64)
        if flat_adjusted.shape != (int(lengths.sum()),):
            raise ContractError("Adjusted importance does not cover every point")
        return ImportanceVector(
            ids=self.ids,
            raw=self.raw,
            normalized=self.normalized,
            adjusted=_split(flat_adjusted, lengths),
            epsilon=self.epsilon,
        )


def _split(flat: np.ndarray, lengths: np.ndarray) -> tuple[np.ndarray, ...]:
    bounds = np.cumsum(lengths)[:-1]
    return tuple(np.split(np.asarray(flat, dtype=np.float64), bounds)) if len(lengths) else ()
