"""Noise schedules, forward noising and the proposal/refinement machinery.

The forward process follows the printed source convention
``z_t = sqrt(abar_t) * z0 + (1 - abar_t) * eps``; a switch selects the
standard variance-preserving coefficient ``sqrt(1 - abar_t)`` instead.

Box coordinates travel through three spaces: pixels, unit (normalized by
image size into [0, 1]) and signal ([-scale, scale], scale 2.0 by
default). Proposal sets and everything inside the refinement loop live in
signal space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .denoiser import (
    DEFAULT_SIGNAL_SCALE,
    Candidate,
    DenoisedBatch,
    FrameContext,
    signal_to_pixel,
)
from .geometry import BBox, PairedBox

__all__ = [
    "NoiseSchedule",
    "cosine_schedule",
    "forward_noise",
    "single_step_noise",
    "PaddingStrategy",
    "PerturbationSchedule",
    "ProposalSet",
    "pad_training_pairs",
    "build_inference_proposals",
    "perturbation_timestep",
    "corrupt_proposals",
    "ddim_refine",
    "round_half_up",
]


def round_half_up(value: float) -> int:
    """Round to nearest integer with halves going up; used for all counts."""
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal-retention table for a T-step forward process.

    ``alpha_bar`` has T + 1 entries with ``alpha_bar[0] == 1``;
    ``beta`` is index-aligned with ``beta[0] == 0`` as padding so that
    ``beta[t]`` is the per-step variance of step t in 1..T.
    """

    timesteps: int
    alpha_bar: np.ndarray
    beta: np.ndarray


def cosine_schedule(timesteps: int = 1000, offset: float = 0.008) -> NoiseSchedule:
    """Squared-cosine schedule; betas clipped to keep every step in (0, 1)."""
    if timesteps < 1:
        raise ValueError("timesteps must be >= 1")
    t = np.arange(timesteps + 1, dtype=np.float64)
    f = np.cos((t / timesteps + offset) / (1 + offset) * math.pi / 2) ** 2
    alpha_bar = f / f[0]
    beta = np.zeros(timesteps + 1)
    beta[1:] = np.clip(1.0 - alpha_bar[1:] / alpha_bar[:-1], 1e-8, 0.9995)
    # Rebuild the cumulative table from the clipped betas so the two stay
    # consistent and alpha_bar remains strictly positive and decreasing.
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - beta[1:])])
    return NoiseSchedule(timesteps=timesteps, alpha_bar=alpha_bar, beta=beta)


def forward_noise(
    z0: np.ndarray,
    t: int,
    noise: np.ndarray,
    sched: NoiseSchedule,
    variance_preserving: bool = False,
) -> np.ndarray:
    """Jump straight from clean samples to timestep ``t``.

    By default the noise coefficient is ``1 - alpha_bar`` exactly as
    printed in the source; ``variance_preserving`` selects the standard
    ``sqrt(1 - alpha_bar)`` form.
    """
    if not 0 <= t <= sched.timesteps:
        raise ValueError(f"timestep {t} outside [0, {sched.timesteps}]")
    abar = sched.alpha_bar[t]
    coef = math.sqrt(1.0 - abar) if variance_preserving else (1.0 - abar)
    return math.sqrt(abar) * np.asarray(z0) + coef * np.asarray(noise)


def single_step_noise(
    z: np.ndarray, t: int, sched: NoiseSchedule, noise: np.ndarray
) -> np.ndarray:
    """One Markov step from timestep t-1 to t."""
    if not 1 <= t <= sched.timesteps:
        raise ValueError(f"timestep {t} outside [1, {sched.timesteps}]")
    b = sched.beta[t]
    return math.sqrt(1.0 - b) * np.asarray(z) + math.sqrt(b) * np.asarray(noise)


class PaddingStrategy(Enum):
    """How extra rows are produced when filling a batch to a fixed size."""

    REPEAT = "repeat"
    CAT_GAUSSIAN = "gaussian"
    CAT_POISSON = "poisson"
    CAT_UNIFORM = "uniform"
    CAT_FULL = "full"


# Unit-space sampling parameters for the padding distributions. The
# Gaussian follows the noise-to-box convention of mean 0.5, sigma 1/6
# (3 sigma spans the image); the Poisson is scaled to the same mean.
GAUSSIAN_PAD_MEAN = 0.5
GAUSSIAN_PAD_STD = 1.0 / 6.0
POISSON_PAD_LAM = 4.0


def _full_image_row() -> np.ndarray:
    return np.array([0.5, 0.5, 1.0, 1.0] * 2)


def _sample_pad_rows(
    n: int, strategy: PaddingStrategy, rng: np.random.Generator
) -> np.ndarray:
    if n == 0:
        return np.zeros((0, 8))
    if strategy is PaddingStrategy.CAT_GAUSSIAN:
        return rng.normal(GAUSSIAN_PAD_MEAN, GAUSSIAN_PAD_STD, size=(n, 8))
    if strategy is PaddingStrategy.CAT_POISSON:
        return rng.poisson(POISSON_PAD_LAM, size=(n, 8)) / (2.0 * POISSON_PAD_LAM)
    if strategy is PaddingStrategy.CAT_UNIFORM:
        return rng.uniform(0.0, 1.0, size=(n, 8))
    if strategy is PaddingStrategy.CAT_FULL:
        return np.tile(_full_image_row(), (n, 1))
    raise ValueError(f"{strategy} does not sample rows")


def pad_training_pairs(
    gt_pairs: np.ndarray,
    n_train: int,
    strategy: PaddingStrategy,
    rng: np.random.Generator,
) -> np.ndarray:
    """Fill ground-truth pair rows (unit space, shape (n, 8)) up to ``n_train``.

    Originals come first and are preserved verbatim. Repeat cycles the
    originals (a full-image row stands in when there are none); the
    concatenation strategies sample fresh rows from their distribution.
    """
    gt_pairs = np.asarray(gt_pairs, dtype=np.float64).reshape(-1, 8)
    n_gt = gt_pairs.shape[0]
    if n_gt > n_train:
        raise ValueError(f"{n_gt} ground-truth pairs exceed the batch size {n_train}")
    extra = n_train - n_gt
    if strategy is PaddingStrategy.REPEAT:
        base = gt_pairs if n_gt else _full_image_row().reshape(1, 8)
        pad = base[np.arange(extra) % base.shape[0]]
    else:
        pad = _sample_pad_rows(extra, strategy, rng)
    return np.concatenate([gt_pairs, pad], axis=0)


class PerturbationSchedule(Enum):
    """Maps average inter-frame motion x in [0, 1] to a timestep fraction."""

    CONSTANT = "constant"
    LINEAR = "linear"
    EXPONENTIAL = "exponential"
    LOGARITHMIC = "logarithmic"

    def fraction(self, x: float) -> float:
        if self is PerturbationSchedule.CONSTANT:
            return 0.4
        if self is PerturbationSchedule.LINEAR:
            return x
        if self is PerturbationSchedule.EXPONENTIAL:
            return (math.exp(x) - 1.0) / (math.e - 1.0)
        return math.log(x + 1.0) / math.log(2.0)


def perturbation_timestep(
    x: float, schedule: PerturbationSchedule, t_max: int = 1000
) -> int:
    """t = round(1000 * f(x)), clamped into [0, t_max]."""
    x = min(max(x, 0.0), 1.0)
    t = round_half_up(1000.0 * schedule.fraction(x))
    return min(max(t, 0), t_max)


class ProposalOrigin:
    PRIOR = 0
    PADDED = 1


@dataclass(frozen=True)
class ProposalSet:
    """A fixed-size batch of paired-box proposals in signal space.

    ``origin`` marks each row as prior-derived or padded; prior rows always
    occupy the leading slots. ``prior_fallback`` records that priors were
    requested but none existed, so every row is padded.
    """

    pairs: np.ndarray        # (n_test, 8), signal space
    timestep: int
    origin: np.ndarray       # (n_test,), ProposalOrigin values
    prior_fallback: bool = False

    @property
    def n_prior_slots(self) -> int:
        return int(np.count_nonzero(self.origin == ProposalOrigin.PRIOR))


def build_inference_proposals(
    priors: Sequence[BBox],
    n_test: int,
    proportion: float,
    strategy: PaddingStrategy,
    rng: np.random.Generator,
    image_size: tuple[int, int],
    scale: float = DEFAULT_SIGNAL_SCALE,
    timestep: int = 0,
) -> ProposalSet:
    """Initialize a proposal batch from the previous frame's tracked boxes.

    ``round_half_up(proportion * n_test)`` leading rows duplicate the prior
    boxes into both pair slots, distributed round-robin; the remainder is
    padded per strategy. With no priors available the whole batch is padded
    and flagged.
    """
    if n_test < 1:
        raise ValueError("n_test must be >= 1")
    if not 0.0 <= proportion <= 1.0:
        raise ValueError("proportion must lie in [0, 1]")

    n_prior = round_half_up(proportion * n_test)
    fallback = n_prior > 0 and len(priors) == 0
    if fallback or len(priors) == 0:
        n_prior = 0

    rows = np.zeros((n_test, 8))
    if n_prior:
        w, h = image_size
        arr = np.stack([b.as_array() for b in priors]) / [w, h, w, h]
        picks = arr[np.arange(n_prior) % arr.shape[0]]
        rows[:n_prior] = np.concatenate([picks, picks], axis=1)
    if n_test - n_prior:
        if strategy is PaddingStrategy.REPEAT and n_prior:
            # Repeating priors keeps cycling them through the padded slots.
            w, h = image_size
            arr = np.stack([b.as_array() for b in priors]) / [w, h, w, h]
            picks = arr[np.arange(n_prior, n_test) % arr.shape[0]]
            rows[n_prior:] = np.concatenate([picks, picks], axis=1)
        elif strategy is PaddingStrategy.REPEAT:
            rows[n_prior:] = _full_image_row()
        else:
            rows[n_prior:] = _sample_pad_rows(n_test - n_prior, strategy, rng)

    origin = np.full(n_test, ProposalOrigin.PADDED, dtype=np.int8)
    origin[:n_prior] = ProposalOrigin.PRIOR
    signal = (rows * 2.0 - 1.0) * scale
    return ProposalSet(
        pairs=signal, timestep=timestep, origin=origin, prior_fallback=fallback
    )


def corrupt_proposals(
    proposals: ProposalSet, alpha: float, rng: np.random.Generator
) -> ProposalSet:
    """Convex interpolation toward Gaussian noise: B = (1-a)*B + a*B_noise.

    Applied per coordinate in signal space; alpha 0 is the identity map and
    draws no randomness.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 0.0:
        return proposals
    noise = rng.standard_normal(proposals.pairs.shape)
    mixed = (1.0 - alpha) * proposals.pairs + alpha * noise
    return replace(proposals, pairs=mixed)


def _as_batch(result, n_rows: int) -> DenoisedBatch:
    if isinstance(result, DenoisedBatch):
        batch = result
    else:
        pairs = np.stack([c.pair.flatten() for c in result])
        batch = DenoisedBatch(
            pairs=pairs,
            cls_prev=np.asarray([c.cls_prev for c in result], dtype=np.float64),
            cls_cur=np.asarray([c.cls_cur for c in result], dtype=np.float64),
            assoc=np.asarray([c.assoc for c in result], dtype=np.float64),
        )
    if batch.pairs.shape[0] != n_rows:
        raise ValueError("denoiser changed the row count")
    return batch


def ddim_refine(
    proposals: ProposalSet,
    steps: int,
    denoiser,
    ctx: FrameContext,
    sched: NoiseSchedule,
    scale: float = DEFAULT_SIGNAL_SCALE,
) -> list[Candidate]:
    """Iteratively denoise a proposal batch and emit pixel-space candidates.

    The timestep ladder descends from the proposal timestep to 0 in
    ``steps`` evenly spaced stages. Every stage asks the denoiser for its
    clean-sample prediction (clamped to the signal range); intermediate
    stages re-noise it to the next rung with the deterministic (eta = 0)
    DDIM update. The final stage's predictions become candidates carrying
    their original proposal indices.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = proposals.pairs.shape[0]
    ladder = np.rint(np.linspace(proposals.timestep, 0, steps + 1)).astype(int)
    z = proposals.pairs.copy()
    batch: DenoisedBatch | None = None

    for stage in range(steps):
        s_cur = int(ladder[stage])
        fn = getattr(denoiser, "denoise_batch", None)
        raw = fn(z, s_cur, ctx) if fn is not None else denoiser.denoise(z, s_cur, ctx)
        batch = _as_batch(raw, n)
        z0_hat = np.clip(batch.pairs, -scale, scale)
        if stage == steps - 1:
            break
        s_next = int(ladder[stage + 1])
        a_cur = sched.alpha_bar[s_cur]
        a_next = sched.alpha_bar[s_next]
        if 1.0 - a_cur < 1e-12:
            eps = np.zeros_like(z)
        else:
            eps = (z - math.sqrt(a_cur) * z0_hat) / math.sqrt(1.0 - a_cur)
        z = math.sqrt(a_next) * z0_hat + math.sqrt(1.0 - a_next) * eps

    assert batch is not None
    pixel = signal_to_pixel(np.clip(batch.pairs, -scale, scale), ctx.image_size, scale)
    return [
        Candidate(
            pair=PairedBox.from_flat(pixel[i]),
            cls_prev=float(batch.cls_prev[i]),
            cls_cur=float(batch.cls_cur[i]),
            assoc=float(batch.assoc[i]),
            index=i,
        )
        for i in range(n)
    ]
