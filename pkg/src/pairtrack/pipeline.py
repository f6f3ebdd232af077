"""End-to-end orchestration of proposal construction, refinement, gating
and the tracker, over frame pairs of a scene or a detection stream.

Two variants share every downstream component. The diffusion variant
builds prior-plus-padded proposals and corrupts both pair members; the
baseline repeats prior boxes only, corrupts just the current-frame member
and runs a single conditional refinement. The variant flag touches
nothing past candidate construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .denoiser import Candidate, FrameContext
from .diffusion import (
    NoiseSchedule,
    PaddingStrategy,
    PerturbationSchedule,
    ProposalSet,
    build_inference_proposals,
    corrupt_proposals,
    cosine_schedule,
    ddim_refine,
    perturbation_timestep,
    round_half_up,
)
from .geometry import BBox, nms2d, nms3d
from .simulator import SceneGroundTruth, perturb_detections
from .tracker import Tracker, TrackerConfig, TrackingResult

__all__ = [
    "Variant",
    "PipelineConfig",
    "run_pair",
    "run_sequence",
    "DetectionStream",
]

DetectionStream = dict[int, list[tuple[BBox, float]]]


class Variant(Enum):
    DIFFUSION = "diffusion"
    BASELINE = "baseline"


@dataclass(frozen=True)
class PipelineConfig:
    n_test: int = 500
    steps: int = 1
    proportion: float = 0.25
    padding: PaddingStrategy = PaddingStrategy.CAT_GAUSSIAN
    perturbation: PerturbationSchedule = PerturbationSchedule.LOGARITHMIC
    timesteps: int = 1000
    signal_scale: float = 2.0
    variant: Variant = Variant.DIFFUSION
    default_motion: float = 0.25
    tracker: TrackerConfig = field(default_factory=TrackerConfig)

    def schedule(self) -> NoiseSchedule:
        return cosine_schedule(self.timesteps)


def _corrupt_cur_only(
    proposals: ProposalSet, alpha: float, rng: np.random.Generator
) -> ProposalSet:
    """Baseline corruption: the previous-frame member stays the condition."""
    if alpha == 0.0:
        return proposals
    noise = rng.standard_normal((proposals.pairs.shape[0], 4))
    mixed = proposals.pairs.copy()
    mixed[:, 4:] = (1.0 - alpha) * mixed[:, 4:] + alpha * noise
    return replace(proposals, pairs=mixed)


def _gate_and_suppress(
    cands: list[Candidate], cfg: PipelineConfig
) -> list[Candidate]:
    """Confidence gate, paired suppression, then the per-frame 2D gate."""
    tr = cfg.tracker
    kept = [c for c in cands if c.assoc > tr.conf_threshold]
    if not kept:
        return []
    keep_idx = nms3d([c.pair for c in kept], [c.assoc for c in kept],
                     tr.nms3d_threshold)
    kept = [kept[i] for i in keep_idx]
    if kept:
        keep_idx = nms2d(
            [c.pair.cur for c in kept], [c.cls_cur for c in kept],
            tr.nms2d_threshold,
        )
        kept = [kept[i] for i in keep_idx]
    kept = [
        c for c in kept
        if c.cls_prev > tr.det_threshold and c.cls_cur > tr.det_threshold
    ]
    return sorted(kept, key=lambda c: c.index)


def run_pair(
    ctx: FrameContext,
    priors: Sequence[BBox],
    cfg: PipelineConfig,
    denoiser,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    motion_x: float,
) -> tuple[list[Candidate], int]:
    """Produce gated candidates for one frame pair.

    Returns the surviving candidates (original proposal indices intact)
    and the number of association slots the tracker should honor.
    """
    t = perturbation_timestep(motion_x, cfg.perturbation, sched.timesteps)
    alpha = 1.0 - math.sqrt(sched.alpha_bar[t])

    if cfg.variant is Variant.BASELINE:
        props = build_inference_proposals(
            priors, cfg.n_test, 1.0, cfg.padding, rng, ctx.image_size,
            scale=cfg.signal_scale, timestep=t,
        )
        props = _corrupt_cur_only(props, alpha, rng)
        ctx = replace(ctx, conditional=True)
        steps = 1
    else:
        props = build_inference_proposals(
            priors, cfg.n_test, cfg.proportion, cfg.padding, rng,
            ctx.image_size, scale=cfg.signal_scale, timestep=t,
        )
        props = corrupt_proposals(props, alpha, rng)
        steps = cfg.steps

    cands = ddim_refine(props, steps, denoiser, ctx, sched, cfg.signal_scale)
    # Association slots stop at the configured proportion for both variants;
    # the baseline's trailing repeat slots double as discovery slots.
    n_assoc = min(props.n_prior_slots, round_half_up(cfg.proportion * cfg.n_test))
    return _gate_and_suppress(cands, cfg), n_assoc



def _tracked_motion(
    result: TrackingResult, frame_prev: int, default: float
) -> float:
    """Mean displacement of ids tracked across the previous two frames,
    normalized by box diagonal; the default covers missing history."""
    a = {r.track_id: r.box for r in result.frames.get(frame_prev - 1, [])}
    b = {r.track_id: r.box for r in result.frames.get(frame_prev, [])}
    shared = set(a) & set(b)
    if not shared:
        return default
    ratios = []
    for i in shared:
        diag = math.hypot(b[i].w, b[i].h)
        if diag <= 0:
            continue
        ratios.append(
            math.hypot(b[i].cx - a[i].cx, b[i].cy - a[i].cy) / diag
        )
    if not ratios:
        return default
    return float(min(max(np.mean(ratios), 0.0), 1.0))


def run_sequence(
    cfg: PipelineConfig,
    denoiser,
    scene: SceneGroundTruth | None = None,
    detections: DetectionStream | None = None,
    image_size: tuple[int, int] | None = None,
    seed: int = 0,
    prior_perturbation: float = 0.0,
    frame_overrides: Callable[[int], PipelineConfig | None] | None = None,
) -> TrackingResult:
    """Track a whole sequence, feeding each frame's output boxes forward.

    ``scene`` provides ground truth for oracle denoisers; ``detections``
    provides per-frame external boxes, which then also serve as the prior
    source. With neither priors come from the tracker's own output.
    ``prior_perturbation`` blends every prior box toward noise before
    proposal construction (robustness protocol); it draws from a stream
    independent of the pipeline's so a zero setting is byte-identical to
    no perturbation.
    """
    if scene is None and detections is None:
        raise ValueError("need a scene or a detection stream")
    if scene is not None:
        n_frames = scene.n_frames
        image_size = scene.image_size
    else:
        n_frames = max(detections) if detections else 0
        if image_size is None:
            raise ValueError("image_size required with a detection stream")
    if n_frames < 2:
        raise ValueError("need at least 2 frames")

    rng = np.random.default_rng([seed, 0])
    perturb_rng = np.random.default_rng([seed, 1])
    sched = cfg.schedule()
    tracker = Tracker(cfg.tracker)
    result = TrackingResult()

    for frame in range(2, n_frames + 1):
        frame_cfg = cfg
        if frame_overrides is not None:
            frame_cfg = frame_overrides(frame) or cfg

        if detections is not None:
            priors = [b for b, _ in detections.get(frame - 1, [])]
        else:
            priors = tracker.prior_boxes()
        if prior_perturbation > 0.0 and priors:
            priors = perturb_detections(
                {0: priors}, prior_perturbation, perturb_rng, image_size
            )[0]

        ctx = FrameContext(
            frame_prev=frame - 1,
            frame_cur=frame,
            image_size=image_size,
            gt_prev=scene.visible(frame - 1) if scene is not None else None,
            gt_cur=scene.visible(frame) if scene is not None else None,
            det_prev=detections.get(frame - 1) if detections is not None else None,
            det_cur=detections.get(frame) if detections is not None else None,
        )
        motion_x = _tracked_motion(result, frame - 1, frame_cfg.default_motion)
        cands, n_assoc = run_pair(
            ctx, priors, frame_cfg, denoiser, sched, rng, motion_x
        )
        for f, row in tracker.step(frame, cands, n_assoc=n_assoc):
            result.add(f, row)
    return result
