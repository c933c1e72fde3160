"""
GNN-TS: the extractive point-importance model.

A segment-wise transformer encoder (``TBert``) embeds every point from its grid cell and time;
a trajectory graph joins each point to every segment node (segment features are mean-pooled
point embeddings) and a graph-attention stack refines the point embeddings. Importance is the
product of a point's uniqueness (distance to its most similar points) and globality (log-mean
Gaussian similarity to the whole trajectory).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from trajsimp_core._compat import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..algs.distance import Projection
from ..exceptions import ContractError, InvalidArgumentError
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.layers import AttentionStack, Embedding, GraphAttentionStack, Linear, Module
from ..nn.optim import Adam, AdamHyper
from ..nn.tensor import (
    ComputationTape,
    Parameter,
    Tensor,
    concat,
    cross_entropy,
    l2norm,
)
from ..schemas.importance import DEFAULT_EPSILON, ImportanceVector
from ..schemas.trajectory import Trajectory, TrajectoryDatabase

logger = logging.getLogger(__name__)

# Reserved token ids
PAD_ID = 0
MASK_ID = 1
UNK_ID = 2
RESERVED_TOKENS = 3

CHECKPOINT_KIND = "gnn_ts"

# Gaussian kernel width in the globality term
KERNEL_SCALE = 2.0


class GnnTsConfig(BaseModel):
    """Architecture and training hyperparameters of GNN-TS (desk-scale defaults)."""

    model_config = ConfigDict(frozen=True)

    cell_size_m: float = Field(default=100.0, gt=0, description="Location grid cell side")
    time_scale_s: float = Field(default=3_600.0, gt=0, description="Seconds per time unit")
    dim: int = Field(default=16, ge=1, description="Encoder model dimension")
    layers: int = Field(default=2, ge=0, description="Encoder attention layers")
    heads: int = Field(default=2, ge=1, description="Encoder attention heads")
    segment_length: int = Field(default=20, ge=2, description="Maximum segment length w")
    gat_layers: int = Field(default=2, ge=0, description="Graph-attention layers")
    gat_heads: int = Field(default=4, ge=1, description="Graph-attention heads")
    gat_dim: int = Field(default=32, ge=1, description="Graph-attention output per head")
    neighbors: int = Field(default=10, ge=1, description="k most similar points for uniqueness")
    epsilon: float = Field(default=DEFAULT_EPSILON, gt=0, lt=0.5, description="Zero elimination")
    lambda1: float = Field(default=0.5, ge=0, description="Globality weight in the loss")
    use_contrastive: bool = Field(
        default=True,
        description="Include the contrastive loss (off: learn only from Diff-TS labels)",
    )
    mask_fraction: float = Field(default=0.2, gt=0, lt=1, description="MLM masking fraction")
    learning_rate: float = Field(default=1e-3, gt=0, description="Adam learning rate")
    seed: int = Field(default=0, ge=0, description="Initialization seed")


# ============================================================================
# Vocabulary and segmentation
# ============================================================================


@dataclass(frozen=True)
class CellVocabulary:
    """Token ids for the grid cells of a corpus, in a fixed projection."""

    projection: Projection
    cell_size: float
    cells: Mapping[tuple[int, int], int]

    @classmethod
    def build(
        cls, db: TrajectoryDatabase, cell_size: float, projection: Projection | None = None
    ) -> Self:
        """Assign ids to every occupied cell, in order of first occurrence."""
        if cell_size <= 0:
            raise InvalidArgumentError(f"Cell size must be positive, got {cell_size}")
        projection = projection or Projection.for_database(db)
        cells: dict[tuple[int, int], int] = {}
        for traj in db:
            for key in cls._keys(projection, cell_size, traj):
                cells.setdefault(key, RESERVED_TOKENS + len(cells))
        logger.debug(f"Built vocabulary of {len(cells)} cells at {cell_size} m")
        return cls(projection=projection, cell_size=cell_size, cells=cells)

    @staticmethod
    def _keys(projection: Projection, cell_size: float, traj: Trajectory) -> list[tuple[int, int]]:
        px, py = projection.forward(traj.x, traj.y)
        cx = np.floor(px / cell_size).astype(np.int64)
        cy = np.floor(py / cell_size).astype(np.int64)
        return list(zip(cx.tolist(), cy.tolist(), strict=True))

    @property
    def size(self) -> int:
        return RESERVED_TOKENS + len(self.cells)

    def encode(self, traj: Trajectory) -> np.ndarray:
        """Token id per point; cells unseen at build time map to ``UNK_ID``."""
        keys = self._keys(self.projection, self.cell_size, traj)
        return np.array([self.cells.get(k, UNK_ID) for k in keys], dtype=np.int64)

    def to_metadata(self) -> dict[str, Any]:
        ordered = sorted(self.cells.items(), key=lambda item: item[1])
        return {
            "ref_lat": self.projection.ref_lat,
            "ref_lon": self.projection.ref_lon,
            "planar": self.projection.planar,
            "cell_size": self.cell_size,
            "cells": [[cx, cy] for (cx, cy), _ in ordered],
        }

    @classmethod
    def from_metadata(cls, meta: Mapping[str, Any]) -> Self:
        projection = Projection(
            ref_lat=float(meta["ref_lat"]), ref_lon=float(meta["ref_lon"]), planar=meta["planar"]
        )
        cells = {(int(c[0]), int(c[1])): RESERVED_TOKENS + i for i, c in enumerate(meta["cells"])}
        return cls(projection=projection, cell_size=float(meta["cell_size"]), cells=cells)


@dataclass(frozen=True)
class TrajectorySegment:
    """Points ``start`` to ``stop - 1`` of a trajectory, padded to ``width``."""

    start: int
    stop: int
    width: int

    @property
    def length(self) -> int:
        return self.stop - self.start

    @property
    def real(self) -> np.ndarray:
        return np.arange(self.width) < self.length


def segment(traj: Trajectory | int, w: int) -> list[TrajectorySegment]:
    """
    Split a trajectory into ``ceil(n / w)`` contiguous segments of ``w`` positions.

    The last segment is padded up to ``w``.
    """
    if w < 2:
        raise InvalidArgumentError(f"Segment length must be at least 2, got {w}")
    n = traj if isinstance(traj, int) else len(traj)
    return [TrajectorySegment(s, min(s + w, n), w) for s in range(0, n, w)]


def segment_mask(n: int, w: int) -> np.ndarray:
    """Block-diagonal attention mask keeping each point inside its own segment."""
    ids = np.arange(n) // w
    return ids[:, None] == ids[None, :]


# ============================================================================
# Encoder
# ============================================================================


class SpatioTemporalEncoder(Module):
    """``z = z_loc + z_time``: a cell embedding plus a learned sinusoidal time basis."""

    def __init__(self, vocab_size: int, dim: int, rng: np.random.Generator):
        self.location = Embedding(vocab_size, dim, rng)
        self.frequency = Parameter(rng.normal(0.0, 1.0, size=dim))
        self.phase = Parameter(rng.uniform(0.0, 2.0 * math.pi, size=dim))

    def __call__(self, tokens: np.ndarray, tau: np.ndarray) -> Tensor:
        angles = Tensor(np.asarray(tau, dtype=np.float64).reshape(-1, 1)) * self.frequency
        angles = angles + self.phase
        # first component stays linear in time, the rest are periodic
        time = concat([angles[:, :1], angles[:, 1:].sin()], axis=1)
        return self.location(tokens) + time


class TBert(Module):
    """Segment-wise transformer point encoder with a masked-cell prediction head."""

    def __init__(self, vocab: CellVocabulary, config: GnnTsConfig, rng: np.random.Generator):
        self.vocab = vocab
        self.config = config
        self.encoder = SpatioTemporalEncoder(vocab.size, config.dim, rng)
        self.stack = AttentionStack(config.dim, config.layers, config.heads, rng)
        self.mlm_head = Linear(config.dim, vocab.size, rng, scale=0.01)

    def time_input(self, traj: Trajectory) -> np.ndarray:
        if traj.is_empty:
            return np.zeros(0)
        return (traj.t - traj.t[0]).astype(np.float64) / self.config.time_scale_s

    def forward(self, tokens: np.ndarray, tau: np.ndarray, mask: np.ndarray) -> Tensor:
        return self.stack(self.encoder(tokens, tau), mask)

    def encode_trajectory(self, traj: Trajectory, tokens: np.ndarray | None = None) -> Tensor:
        """(n, d) embeddings, every segment encoded independently in one pass."""
        tokens = self.vocab.encode(traj) if tokens is None else tokens
        mask = segment_mask(len(traj), self.config.segment_length)
        return self.forward(tokens, self.time_input(traj), mask)


def encode_points(model: TBert, traj: Trajectory, seg: TrajectorySegment) -> Tensor:
    """(w, d) embeddings of one padded segment; padding positions attend but are never attended."""
    tokens = np.full(seg.width, PAD_ID, dtype=np.int64)
    tau = np.zeros(seg.width)
    tokens[: seg.length] = model.vocab.encode(traj)[seg.start : seg.stop]
    tau[: seg.length] = model.time_input(traj)[seg.start : seg.stop]
    mask = np.broadcast_to(seg.real[None, :], (seg.width, seg.width))
    return model.forward(tokens, tau, mask)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    steps: int
    extras: dict[str, float] = field(default_factory=dict)


def _masked_positions(n: int, fraction: float, rng: np.random.Generator) -> np.ndarray:
    count = min(n, max(1, round(fraction * n)))
    return np.sort(rng.choice(n, size=count, replace=False))


def pretrain_mlm(
    model: TBert,
    corpus: TrajectoryDatabase,
    epochs: int,
    seed: int,
    optimizer: Adam | None = None,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> list[EpochStats]:
    """
    Masked-cell pretraining: hide a fraction of each trajectory's cells behind the mask token and
    predict the original cell ids with cross-entropy.

    One optimizer step per trajectory; trajectories are shuffled each epoch.
    """
    if len(corpus) == 0:
        raise InvalidArgumentError("Cannot pretrain on an empty corpus")
    rng = np.random.default_rng(seed)
    optimizer = optimizer or Adam(model.parameters(), AdamHyper(lr=model.config.learning_rate))
    history: list[EpochStats] = []
    for epoch in range(epochs):
        total, correct, masked, steps = 0.0, 0, 0, 0
        for pos in rng.permutation(len(corpus)):
            traj = corpus.trajectories[int(pos)]
            if traj.is_empty:
                continue
            targets = model.vocab.encode(traj)
            hidden = _masked_positions(len(traj), model.config.mask_fraction, rng)
            tokens = targets.copy()
            tokens[hidden] = MASK_ID
            with ComputationTape() as tape:
                logits = model.mlm_head(model.encode_trajectory(traj, tokens)[hidden])
                loss = cross_entropy(logits, targets[hidden])
            optimizer.step(tape.backward(loss))
            total += loss.item()
            correct += int(np.sum(np.argmax(logits.data, axis=1) == targets[hidden]))
            masked += hidden.size
            steps += 1
        stats = EpochStats(
            epoch=epoch,
            loss=total / max(steps, 1),
            steps=steps,
            extras={"accuracy": correct / max(masked, 1)},
        )
        logger.info(
            f"MLM epoch {epoch}: loss {stats.loss:.4f}, accuracy {stats.extras['accuracy']:.3f}"
        )
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return history


# ============================================================================
# Trajectory graph
# ============================================================================


@dataclass(frozen=True)
class TrajectoryGraph:
    """
    Point nodes ``0..n-1`` followed by segment nodes ``n..n+k-1``.

    ``adjacency`` holds the complete bipartite point-segment edges plus a self-loop on every
    node, so each node also attends to itself.
    """

    features: Tensor
    num_points: int
    num_segments: int
    adjacency: np.ndarray

    @property
    def num_edges(self) -> int:
        """Point-segment edges (self-loops not counted)."""
        return self.num_points * self.num_segments


def build_graph(
    embeddings: Tensor, segments: Sequence[TrajectorySegment]
) -> TrajectoryGraph:
    """Attach mean-pooled segment nodes to the point embeddings of one trajectory."""
    n = embeddings.shape[0]
    if sum(s.length for s in segments) != n:
        raise ContractError(f"Segments cover {sum(s.length for s in segments)} of {n} points")
    k = len(segments)
    pooling = np.zeros((k, n))
    for j, seg in enumerate(segments):
        pooling[j, seg.start : seg.stop] = 1.0 / seg.length
    features = concat([embeddings, Tensor(pooling) @ embeddings], axis=0)
    adjacency = np.eye(n + k, dtype=bool)
    adjacency[:n, n:] = True
    adjacency[n:, :n] = True
    return TrajectoryGraph(features=features, num_points=n, num_segments=k, adjacency=adjacency)


# ============================================================================
# Importance
# ============================================================================


def cosine_neighbors(g: np.ndarray, k: int) -> np.ndarray:
    """
    (n, min(k, n-1)) indices of each row's most cosine-similar other rows.

    Ties go to the lower index.
    """
    n = g.shape[0]
    if n < 2:
        raise InvalidArgumentError(f"Need at least 2 points for neighbors, got {n}")
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    unit = g / np.where(norms > 0, norms, 1.0)
    similarity = unit @ unit.T
    np.fill_diagonal(similarity, -np.inf)
    return np.argsort(-similarity, axis=1, kind="stable")[:, : min(k, n - 1)]


def uniqueness(g: Tensor, neighbors: np.ndarray) -> Tensor:
    """Mean L2 distance from each point to its neighbors; (n,) non-negative."""
    if neighbors.ndim != 2 or neighbors.shape[1] == 0:
        raise InvalidArgumentError("Uniqueness needs at least one neighbor per point")
    n, dim = g.shape
    diffs = g.reshape(n, 1, dim) - g[neighbors]
    return l2norm(diffs, axis=-1).mean(axis=1)


def pairwise_sq_distances(g: Tensor) -> Tensor:
    n = g.shape[0]
    sq = (g * g).sum(axis=1)
    gram = g @ g.transpose(1, 0)
    return (sq.reshape(n, 1) + sq.reshape(1, n) - gram * 2.0).relu()


def log_mean_kernel(g: Tensor) -> Tensor:
    """``log(mean_{j != i} exp(-2 |g_i - g_j|^2))`` for every row ``i``; (n,) non-positive."""
    n = g.shape[0]
    if n < 2:
        raise InvalidArgumentError(f"Need at least 2 points, got {n}")
    scores = pairwise_sq_distances(g) * -KERNEL_SCALE
    return scores.logsumexp(axis=1, mask=~np.eye(n, dtype=bool)) - math.log(n - 1)


def globality(g: Tensor) -> Tensor:
    return log_mean_kernel(g)


def contrastive_loss(uni: Tensor, glob: Tensor, lambda1: float) -> Tensor:
    """``mean(uni) + lambda1 * mean(glob)`` over the batch points."""
    return uni.mean() + glob.mean() * lambda1


def importance(
    uni: np.ndarray, glob: np.ndarray, epsilon: float = DEFAULT_EPSILON
) -> np.ndarray:
    """Raw importance ``uni * glob + epsilon``."""
    if epsilon <= 0:
        raise InvalidArgumentError(f"epsilon must be positive, got {epsilon}")
    return np.asarray(uni) * np.asarray(glob) + epsilon


def soft_normalize(raw: Tensor, epsilon: float) -> Tensor:
    """Differentiable min-max into ``[epsilon, 1 - epsilon]``; constant input maps to 0.5."""
    low, high = raw.min(), raw.max()
    if high.item() - low.item() <= 0.0:
        return Tensor(np.full(raw.shape, 0.5))
    return (raw - low) / (high - low) * (1.0 - 2.0 * epsilon) + epsilon


def ml_loss(probabilities: Tensor, labels: np.ndarray) -> Tensor:
    """
    Binary cross-entropy of importances against amplified labels, summed over points.

    Raises:
        InvalidArgumentError: If an importance is outside (0, 1) or labels are not binary.
    """
    p = probabilities.data
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise InvalidArgumentError("Importances must lie strictly inside (0, 1)")
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != p.shape or not np.all((labels == 0) | (labels == 1)):
        raise InvalidArgumentError("Labels must be a binary vector matching the importances")
    positive = probabilities.log() * labels
    negative = (1.0 - probabilities).log() * (1.0 - labels)
    return -(positive + negative).sum()


@dataclass(frozen=True)
class PointScores:
    uniqueness: np.ndarray
    globality: np.ndarray
    raw: np.ndarray


class ImportanceModel(Module):
    """T-Bert encoder followed by graph-attention refinement."""

    def __init__(self, vocab: CellVocabulary, config: GnnTsConfig | None = None):
        config = config or GnnTsConfig()
        rng = np.random.default_rng(config.seed)
        self.config = config
        self.tbert = TBert(vocab, config, rng)
        self.gat = GraphAttentionStack(
            config.dim, config.gat_dim, config.gat_layers, config.gat_heads, rng
        )

    @classmethod
    def for_corpus(cls, corpus: TrajectoryDatabase, config: GnnTsConfig | None = None) -> Self:
        config = config or GnnTsConfig()
        return cls(CellVocabulary.build(corpus, config.cell_size_m), config)

    @property
    def vocab(self) -> CellVocabulary:
        return self.tbert.vocab

    def embed(self, traj: Trajectory) -> Tensor:
        """Refined (n, out_dim) point embeddings ``g``."""
        h = self.tbert.encode_trajectory(traj)
        graph = build_graph(h, segment(traj, self.config.segment_length))
        return refine(self, graph)

    def scores(self, g: Tensor) -> tuple[Tensor, Tensor]:
        neighbors = cosine_neighbors(g.data, self.config.neighbors)
        return uniqueness(g, neighbors), globality(g)

    def predict(self, traj: Trajectory) -> PointScores:
        """Uniqueness, globality and raw importance per point (no gradients recorded)."""
        n = len(traj)
        if n < 2:
            zeros = np.zeros(n)
            return PointScores(zeros, zeros, importance(zeros, zeros, self.config.epsilon))
        uni, glob = self.scores(self.embed(traj))
        return PointScores(
            uniqueness=uni.data,
            globality=glob.data,
            raw=importance(uni.data, glob.data, self.config.epsilon),
        )

    def predict_database(self, db: TrajectoryDatabase, max_workers: int = 1) -> ImportanceVector:
        """Raw importance for every point, normalized over the whole database."""
        if max_workers > 1:
            with ThreadPoolExecutor(max_workers=max_workers) as pool:
                results = list(pool.map(self.predict, db.trajectories))
        else:
            results = [self.predict(t) for t in db]
        return ImportanceVector.from_raw(db, [r.raw for r in results], self.config.epsilon)

    def save(self, path: Path) -> Path:
        metadata = {
            "config": self.config.model_dump(mode="json"),
            "vocab": self.vocab.to_metadata(),
        }
        return save_checkpoint(path, self.state_dict(), CHECKPOINT_KIND, metadata)

    @classmethod
    def load(cls, path: Path) -> Self:
        arrays, header = load_checkpoint(path, CHECKPOINT_KIND)
        config = GnnTsConfig.model_validate(header.metadata["config"])
        model = cls(CellVocabulary.from_metadata(header.metadata["vocab"]), config)
        model.load_state_dict(arrays)
        return model


def refine(model: ImportanceModel, graph: TrajectoryGraph) -> Tensor:
    """Graph-attention refinement; returns the point-node rows only."""
    refined = model.gat(graph.features, graph.adjacency)
    return refined[: graph.num_points]


def gnn_loss(
    model: ImportanceModel,
    traj: Trajectory,
    labels: np.ndarray | None = None,
    lambda3: float = 0.5,
) -> tuple[Tensor, dict[str, float]]:
    """
    Contrastive loss, plus ``lambda3`` times the ML loss when labels are given.

    With ``use_contrastive`` off the loss is the weighted ML loss alone.

    Raises:
        InvalidArgumentError: If neither term applies.
    """
    if not has_loss_terms(model.config, labels, lambda3):
        raise InvalidArgumentError("GNN-TS loss without contrastive term needs labels and lambda3")
    uni, glob = model.scores(model.embed(traj))
    parts: dict[str, float] = {}
    terms: list[Tensor] = []
    if model.config.use_contrastive:
        contrastive = contrastive_loss(uni, glob, model.config.lambda1)
        parts["contrastive"] = contrastive.item()
        terms.append(contrastive)
    if labels is not None and lambda3 > 0:
        raw = uni * glob + model.config.epsilon
        term = ml_loss(soft_normalize(raw, model.config.epsilon), labels)
        parts["ml"] = term.item()
        terms.append(term * lambda3)
    loss = terms[0]
    for extra in terms[1:]:
        loss = loss + extra
    return loss, parts


def has_loss_terms(config: GnnTsConfig, labels: np.ndarray | None, lambda3: float) -> bool:
    return config.use_contrastive or (labels is not None and lambda3 > 0)


def _label_for(labels: Mapping[str, np.ndarray] | None, traj: Trajectory) -> np.ndarray | None:
    return labels.get(traj.id) if labels is not None else None


def train_gnn_ts(
    model: ImportanceModel,
    corpus: TrajectoryDatabase,
    epochs: int,
    seed: int,
    labels: Mapping[str, np.ndarray] | None = None,
    lambda3: float = 0.5,
    optimizer: Adam | None = None,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> list[EpochStats]:
    """
    Train GNN-TS in place, one optimizer step per trajectory.

    Without ``labels`` the loss is the contrastive loss alone; with them each labelled trajectory
    adds ``lambda3`` times its ML loss. Shuffling draws from ``seed`` the same way in both cases.
    Trajectories with fewer than two points are skipped, as are unlabelled ones when the
    contrastive loss is off.
    """
    if len(corpus) == 0:
        raise InvalidArgumentError("Cannot train on an empty corpus")
    if lambda3 < 0:
        raise InvalidArgumentError(f"lambda3 must be non-negative, got {lambda3}")
    rng = np.random.default_rng(seed)
    optimizer = optimizer or Adam(model.parameters(), AdamHyper(lr=model.config.learning_rate))
    short = sum(1 for t in corpus if len(t) < 2)
    if short:
        logger.warning(f"Skipping {short} trajectories with fewer than 2 points")
    if not model.config.use_contrastive:
        unlabelled = sum(
            1 for t in corpus if not has_loss_terms(model.config, _label_for(labels, t), lambda3)
        )
        if unlabelled:
            logger.warning(f"Contrastive loss off: skipping {unlabelled} unlabelled trajectories")

    history: list[EpochStats] = []
    for epoch in range(epochs):
        totals: dict[str, float] = {}
        total, steps = 0.0, 0
        for pos in rng.permutation(len(corpus)):
            traj = corpus.trajectories[int(pos)]
            if len(traj) < 2:
                continue
            y = _label_for(labels, traj)
            if not has_loss_terms(model.config, y, lambda3):
                continue
            with ComputationTape() as tape:
                loss, parts = gnn_loss(model, traj, y, lambda3)
            optimizer.step(tape.backward(loss))
            total += loss.item()
            steps += 1
            for name, value in parts.items():
                totals[name] = totals.get(name, 0.0) + value
        stats = EpochStats(
            epoch=epoch,
            loss=total / max(steps, 1),
            steps=steps,
            extras={name: value / max(steps, 1) for name, value in totals.items()},
        )
        logger.info(f"GNN-TS epoch {epoch}: loss {stats.loss:.4f} over {steps} trajectories")
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return history
