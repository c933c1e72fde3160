"""
Diff-TS: a conditional denoising-diffusion model over point embeddings.

The encoder embeds a whole trajectory ``T`` into ``H_T``. Training noises only the rows of a
soft-label subsequence ``T*`` (``H_T*``, taken from ``H_T``) while ``H_T`` stays clean as the
condition; the denoiser predicts the added noise. At inference, ``alpha`` Gaussian embeddings
are denoised against ``H_T`` and matched back to distinct trajectory points, giving amplified
binary labels.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path
from trajsimp_core._compat import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..algs.distance import subsequence_indices
from ..exceptions import InvalidArgumentError
from ..nn.checkpoint import load_checkpoint, save_checkpoint
from ..nn.layers import AttentionStack, Linear, Module
from ..nn.optim import Adam, AdamHyper
from ..nn.tensor import ComputationTape, Tensor, concat
from ..schemas.trajectory import SimplifiedDatabase, Trajectory, TrajectoryDatabase
from .gnn_ts import CellVocabulary, EpochStats, SpatioTemporalEncoder, log_mean_kernel

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "diff_ts"

# Largest beta a rescaled schedule may reach
MAX_BETA = 0.999


class DiffTsConfig(BaseModel):
    """Architecture, schedule and training hyperparameters of Diff-TS (desk-scale defaults)."""

    model_config = ConfigDict(frozen=True)

    dim: int = Field(default=16, ge=1, description="Embedding dimension")
    time_scale_s: float = Field(default=3_600.0, gt=0, description="Seconds per time unit")
    encoder_layers: int = Field(default=2, ge=0, description="Trajectory encoder layers")
    encoder_heads: int = Field(default=2, ge=1, description="Trajectory encoder heads")
    denoiser_layers: int = Field(default=2, ge=1, description="Denoiser attention layers")
    denoiser_heads: int = Field(default=2, ge=1, description="Denoiser attention heads")
    steps: int = Field(default=50, ge=1, description="Diffusion steps")
    beta_start: float = Field(default=1e-4, gt=0, lt=1, description="First beta of the schedule")
    beta_end: float = Field(default=0.02, gt=0, lt=1, description="Last beta of the schedule")
    reference_steps: int | None = Field(
        default=None,
        ge=1,
        description="Rescale the betas by reference_steps / steps (None: betas as given)",
    )
    lambda2: float = Field(default=0.5, ge=0, description="Diversity loss weight")
    amplified_count: int = Field(default=20, ge=1, description="Points per amplified label set")
    learning_rate: float = Field(default=1e-3, gt=0, description="Adam learning rate")
    seed: int = Field(default=0, ge=0, description="Initialization seed")


# ============================================================================
# Noise schedule
# ============================================================================


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Betas ``beta_0 < beta_1 < ... < beta_G`` and the derived DDPM quantities.

    ``alpha_bar[g] = prod_{s=1..g} (1 - beta_s)`` with ``alpha_bar[0] = 1``; step 0 only adds
    ``N(0, beta_0)`` noise and is not part of the product.
    """

    betas: np.ndarray

    def __post_init__(self) -> None:
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 2:
            raise InvalidArgumentError("A schedule needs beta_0 and at least one step")
        if np.any(betas <= 0) or np.any(betas >= 1) or np.any(np.diff(betas) <= 0):
            raise InvalidArgumentError("Betas must be strictly increasing inside (0, 1)")
        betas.flags.writeable = False
        object.__setattr__(self, "betas", betas)

    @classmethod
    def linear(
        cls,
        steps: int,
        beta_start: float = 1e-4,
        beta_end: float = 0.02,
        reference_steps: int | None = None,
    ) -> Self:
        """
        Linearly spaced betas over ``steps + 1`` entries.

        When ``reference_steps`` is set the betas are scaled by ``reference_steps / steps`` so a
        short chain destroys the signal as fully as the reference one; the scale is capped so no
        beta exceeds ``MAX_BETA``.
        """
        if steps < 1:
            raise InvalidArgumentError(f"Diffusion needs at least one step, got {steps}")
        scale = 1.0
        if reference_steps is not None:
            scale = min(reference_steps / steps, MAX_BETA / beta_end)
        return cls(np.linspace(beta_start * scale, beta_end * scale, steps + 1))

    @property
    def steps(self) -> int:
        return self.betas.size - 1

    @property
    def alpha_bar(self) -> np.ndarray:
        return np.concatenate([[1.0], np.cumprod(1.0 - self.betas[1:])])

    def posterior_variance(self, gamma: int) -> float:
        """Variance of ``q(x_{g-1} | x_g, x_0)``; zero at ``g = 1``."""
        alpha_bar = self.alpha_bar
        return float(
            self.betas[gamma] * (1.0 - alpha_bar[gamma - 1]) / (1.0 - alpha_bar[gamma])
        )

    def check_step(self, gamma: int, low: int = 1) -> None:
        if not low <= gamma <= self.steps:
            raise InvalidArgumentError(f"Step {gamma} outside [{low}, {self.steps}]")


def forward_noise(
    state: np.ndarray,
    condition_rows: int,
    schedule: NoiseSchedule,
    gamma: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    One Markov noising step on the rows after ``condition_rows``.

    Step 0 draws ``N(x, beta_0 I)``; step ``g >= 1`` draws ``N(sqrt(1 - beta_g) x, beta_g I)``.
    The first ``condition_rows`` rows are copied unchanged.
    """
    schedule.check_step(gamma, low=0)
    beta = float(schedule.betas[gamma])
    out = np.array(state, dtype=np.float64)
    target = out[condition_rows:]
    noise = rng.standard_normal(target.shape)
    scale = 1.0 if gamma == 0 else math.sqrt(1.0 - beta)
    out[condition_rows:] = scale * target + math.sqrt(beta) * noise
    return out


def q_sample(
    x0: np.ndarray, schedule: NoiseSchedule, gamma: int, noise: np.ndarray
) -> np.ndarray:
    """Closed-form ``x_g = sqrt(alpha_bar_g) x_0 + sqrt(1 - alpha_bar_g) noise``."""
    schedule.check_step(gamma)
    alpha_bar = float(schedule.alpha_bar[gamma])
    return math.sqrt(alpha_bar) * x0 + math.sqrt(1.0 - alpha_bar) * noise


def timestep_features(gamma: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal features of a diffusion step."""
    half = max(dim // 2, 1)
    freqs = np.exp(-math.log(10_000.0) * np.arange(half) / half)
    angles = gamma * freqs
    features = np.concatenate([np.sin(angles), np.cos(angles)])
    return np.resize(features, dim)


# ============================================================================
# Model
# ============================================================================


class DiffusionModel(Module):
    """Trajectory encoder, denoiser stack and noise head."""

    def __init__(self, vocab: CellVocabulary, config: DiffTsConfig | None = None):
        config = config or DiffTsConfig()
        rng = np.random.default_rng(config.seed)
        self.vocab = vocab
        self.config = config
        self.schedule = NoiseSchedule.linear(
            config.steps, config.beta_start, config.beta_end, config.reference_steps
        )
        self.point_encoder = SpatioTemporalEncoder(vocab.size, config.dim, rng)
        self.encoder = AttentionStack(
            config.dim, config.encoder_layers, config.encoder_heads, rng
        )
        self.step_embedding = Linear(config.dim, config.dim, rng)
        self.denoiser = AttentionStack(
            config.dim, config.denoiser_layers, config.denoiser_heads, rng
        )
        self.noise_head = Linear(config.dim, config.dim, rng)

    def encode(self, traj: Trajectory) -> Tensor:
        """``H_T``: (n, d) embeddings of every point."""
        tau = (traj.t - traj.t[0]).astype(np.float64) / self.config.time_scale_s
        return self.encoder(self.point_encoder(self.vocab.encode(traj), tau))

    def predict_noise(self, condition: Tensor, noised: Tensor, gamma: int) -> Tensor:
        """Noise estimate for the ``noised`` rows, attending jointly with the clean condition."""
        n = condition.shape[0]
        step = self.step_embedding(Tensor(timestep_features(gamma, self.config.dim)[None, :]))
        hidden = self.denoiser(concat([condition, noised + step], axis=0))
        return self.noise_head(hidden[n:])

    def save(self, path: Path) -> Path:
        metadata = {
            "config": self.config.model_dump(mode="json"),
            "vocab": self.vocab.to_metadata(),
        }
        return save_checkpoint(path, self.state_dict(), CHECKPOINT_KIND, metadata)

    @classmethod
    def load(cls, path: Path) -> Self:
        arrays, header = load_checkpoint(path, CHECKPOINT_KIND)
        config = DiffTsConfig.model_validate(header.metadata["config"])
        model = cls(CellVocabulary.from_metadata(header.metadata["vocab"]), config)
        model.load_state_dict(arrays)
        return model


def concat_encode(model: DiffusionModel, traj: Trajectory, simplified: Trajectory) -> Tensor:
    """
    ``[H_T ; H_T*]``: the trajectory embeddings followed by the rows of its subsequence.

    Raises:
        ContractError: If ``simplified`` is not a subsequence of ``traj``.
    """
    indices = subsequence_indices(traj, simplified)
    h = model.encode(traj)
    return concat([h, h[indices]], axis=0)


def posterior_mean(
    schedule: NoiseSchedule, noised: Tensor, predicted_noise: Tensor, gamma: int
) -> Tensor:
    """``(x_g - beta_g / sqrt(1 - alpha_bar_g) * eps) / sqrt(1 - beta_g)``."""
    beta = float(schedule.betas[gamma])
    alpha_bar = float(schedule.alpha_bar[gamma])
    coef = beta / math.sqrt(1.0 - alpha_bar)
    return (noised - predicted_noise * coef) * (1.0 / math.sqrt(1.0 - beta))


def reverse_step(
    model: DiffusionModel,
    condition: Tensor,
    noised: np.ndarray,
    gamma: int,
    rng: np.random.Generator | None = None,
    stochastic: bool = True,
) -> np.ndarray:
    """
    Sample ``x_{g-1}`` from ``N(mu(x_g), sigma_g^2 I)`` for the generated rows.

    ``sigma_g^2`` is the schedule's posterior variance. With ``stochastic=False`` (or no ``rng``)
    the step returns the mean.
    """
    model.schedule.check_step(gamma)
    eps = model.predict_noise(condition, Tensor(noised), gamma)
    mean = posterior_mean(model.schedule, Tensor(noised), eps, gamma).data
    variance = model.schedule.posterior_variance(gamma)
    if not stochastic or rng is None or variance == 0.0:
        return mean
    return mean + math.sqrt(variance) * rng.standard_normal(mean.shape)


def diversity_loss(generated: Tensor) -> Tensor:
    """Mean over generated points of ``log(mean_{j != i} exp(-2 |h_i - h_j|^2))``."""
    if generated.shape[0] < 2:
        raise InvalidArgumentError("Diversity needs at least two generated points")
    return log_mean_kernel(generated).mean()


def diffusion_loss(
    model: DiffusionModel,
    traj: Trajectory,
    retained: np.ndarray,
    rng: np.random.Generator,
    lambda2: float,
) -> tuple[Tensor, dict[str, float]]:
    """
    Noise-prediction MSE on the soft-label rows, plus ``lambda2`` times the diversity of the
    one-step denoised means.

    The clean target rows are taken from ``H_T`` without gradient; the encoder learns through
    the condition path.
    """
    h = model.encode(traj)
    x0 = h.data[retained]
    gamma = int(rng.integers(1, model.schedule.steps + 1))
    noise = rng.standard_normal(x0.shape)
    noised = Tensor(q_sample(x0, model.schedule, gamma, noise))
    predicted = model.predict_noise(h, noised, gamma)
    diff = predicted - noise
    loss = (diff * diff).mean()
    parts = {"diffusion": loss.item()}
    if lambda2 > 0 and retained.size >= 2:
        div = diversity_loss(posterior_mean(model.schedule, noised, predicted, gamma))
        parts["diversity"] = div.item()
        loss = loss + div * lambda2
    return loss, parts


def train_diff_ts(
    model: DiffusionModel,
    soft_labels: SimplifiedDatabase,
    epochs: int,
    seed: int,
    lambda2: float | None = None,
    optimizer: Adam | None = None,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> list[EpochStats]:
    """
    Train Diff-TS in place on ``soft_labels``: one step per trajectory with a non-empty ``T*``.

    The diffusion step and noise of every training example are drawn from ``seed``.
    """
    lambda2 = model.config.lambda2 if lambda2 is None else lambda2
    if lambda2 < 0:
        raise InvalidArgumentError(f"lambda2 must be non-negative, got {lambda2}")
    corpus = soft_labels.original
    rng = np.random.default_rng(seed)
    optimizer = optimizer or Adam(model.parameters(), AdamHyper(lr=model.config.learning_rate))

    history: list[EpochStats] = []
    for epoch in range(epochs):
        totals: dict[str, float] = {}
        total, steps = 0.0, 0
        for pos in rng.permutation(len(corpus)):
            retained = soft_labels.retained[int(pos)]
            if retained.size == 0:
                continue
            with ComputationTape() as tape:
                loss, parts = diffusion_loss(
                    model, corpus.trajectories[int(pos)], retained, rng, lambda2
                )
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
        logger.info(f"Diff-TS epoch {epoch}: loss {stats.loss:.4f} over {steps} trajectories")
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return history


# ============================================================================
# Amplified labels
# ============================================================================


@dataclass(frozen=True)
class AmplifiedLabels:
    """Binary per-point labels for one trajectory; ``selected`` lists the ones, ascending."""

    traj_id: str
    labels: np.ndarray
    selected: np.ndarray

    @property
    def count(self) -> int:
        return int(self.selected.size)


def match_points(generated: np.ndarray, points: np.ndarray, count: int) -> np.ndarray:
    """
    Greedy distinct cosine matching of generated rows to point rows.

    Pairs are visited by decreasing similarity; a pair is taken when neither its generated row
    nor its point is used yet. Returns the ``count`` chosen point indices, ascending.
    """

    def unit(a: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(a, axis=1, keepdims=True)
        return a / np.where(norms > 0, norms, 1.0)

    similarity = unit(generated) @ unit(points).T
    order = np.argsort(-similarity, axis=None, kind="stable")
    rows, cols = np.unravel_index(order, similarity.shape)
    used_rows: set[int] = set()
    chosen: list[int] = []
    taken = np.zeros(points.shape[0], dtype=bool)
    for r, c in zip(rows.tolist(), cols.tolist(), strict=True):
        if r in used_rows or taken[c]:
            continue
        used_rows.add(r)
        taken[c] = True
        chosen.append(c)
        if len(chosen) == count:
            break
    return np.sort(np.array(chosen, dtype=np.int64))


def infer_amplified(
    model: DiffusionModel, traj: Trajectory, alpha: int, seed: int
) -> AmplifiedLabels:
    """
    Denoise ``alpha`` Gaussian embeddings conditioned on ``H_T`` and mark the ``alpha`` points
    they match.

    Raises:
        InvalidArgumentError: If ``alpha`` is not in ``[1, |T| - 2]``.
    """
    n = len(traj)
    if not 1 <= alpha < n - 1:
        raise InvalidArgumentError(f"alpha={alpha} must be at least 1 and below {n - 1}")
    rng = np.random.default_rng(seed)
    condition = model.encode(traj)
    x = rng.standard_normal((alpha, model.config.dim))
    for gamma in range(model.schedule.steps, 0, -1):
        x = reverse_step(model, condition, x, gamma, rng)
    selected = match_points(x, condition.data, alpha)
    labels = np.zeros(n, dtype=np.int8)
    labels[selected] = 1
    return AmplifiedLabels(traj_id=traj.id, labels=labels, selected=selected)


def infer_database(
    model: DiffusionModel, db: TrajectoryDatabase, alpha: int, seed: int
) -> dict[str, np.ndarray]:
    """Amplified labels for every trajectory long enough for ``alpha``; keyed by id."""
    labels: dict[str, np.ndarray] = {}
    skipped = 0
    for pos, traj in enumerate(db):
        if len(traj) <= alpha + 1:
            skipped += 1
            continue
        sub_seed = int(np.random.SeedSequence(seed, spawn_key=(pos,)).generate_state(1)[0])
        labels[traj.id] = infer_amplified(model, traj, alpha, sub_seed).labels
    if skipped:
        logger.warning(f"No amplified labels for {skipped} trajectories shorter than {alpha + 2}")
    return labels
