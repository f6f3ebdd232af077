"""Pluggable denoisers that refine noisy paired boxes into candidates.

A denoiser maps a batch of noisy paired boxes (signal space) plus a
timestep and frame context to one candidate per row: a cleaned paired box,
per-frame class scores and an association score. Three implementations
ship here:

* ``OracleDenoiser`` snaps rows toward ground truth with configurable
  fidelity, standing in for a trained head in tests and simulations.
* ``DetectionSnapDenoiser`` snaps rows onto external per-frame detections.
* ``IdentityDenoiser`` echoes its input (test stub).

All denoisers are deterministic functions of their inputs and safe to call
concurrently once constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .geometry import BBox, PairedBox, iou3d_matrix, iou_matrix

__all__ = [
    "FrameContext",
    "Candidate",
    "DenoisedBatch",
    "Denoiser",
    "OracleDenoiser",
    "OracleConfig",
    "DetectionSnapDenoiser",
    "IdentityDenoiser",
    "StfWeights",
    "stf_fuse",
    "association_score_head",
    "signal_to_pixel",
    "pixel_to_signal",
]

DEFAULT_SIGNAL_SCALE = 2.0


def pixel_to_signal(boxes: np.ndarray, image_size: tuple[int, int],
                    scale: float = DEFAULT_SIGNAL_SCALE) -> np.ndarray:
    """Map pixel-space (cx, cy, w, h) rows into the [-scale, scale] signal range.

    Accepts (n, 4) single boxes or (n, 8) flattened pairs.
    """
    boxes = np.asarray(boxes, dtype=np.float64)
    w, h = image_size
    norm = np.tile([w, h, w, h], boxes.shape[-1] // 4)
    return (boxes / norm * 2.0 - 1.0) * scale


def signal_to_pixel(signal: np.ndarray, image_size: tuple[int, int],
                    scale: float = DEFAULT_SIGNAL_SCALE) -> np.ndarray:
    """Inverse of :func:`pixel_to_signal`, with clamping to the valid range."""
    signal = np.clip(np.asarray(signal, dtype=np.float64), -scale, scale)
    w, h = image_size
    norm = np.tile([w, h, w, h], signal.shape[-1] // 4)
    return (signal / scale + 1.0) / 2.0 * norm


@dataclass
class FrameContext:
    """Everything a concrete denoiser may condition on for one frame pair.

    ``frame_prev``/``frame_cur`` are time indices (equal indices put the
    engine in detection mode). Ground truth is a list of (identity, box)
    per frame; detections are (box, confidence). ``conditional`` marks the
    baseline variant where only the current frame member is denoised and
    the previous member acts as the condition.
    """

    frame_prev: int
    frame_cur: int
    image_size: tuple[int, int]
    gt_prev: Sequence[tuple[int, BBox]] | None = None
    gt_cur: Sequence[tuple[int, BBox]] | None = None
    det_prev: Sequence[tuple[BBox, float]] | None = None
    det_cur: Sequence[tuple[BBox, float]] | None = None
    conditional: bool = False


@dataclass
class Candidate:
    """A denoised paired box with its scores.

    ``pair`` is in pixel space when the candidate leaves the refinement
    loop; inside the loop (raw ``denoise`` output) it is in signal space.
    ``index`` is the original proposal slot the candidate came from.
    """

    pair: PairedBox
    cls_prev: float
    cls_cur: float
    assoc: float
    index: int = 0


@dataclass
class DenoisedBatch:
    """Array view of a denoiser output: one row per input proposal."""

    pairs: np.ndarray      # (n, 8), signal space
    cls_prev: np.ndarray   # (n,)
    cls_cur: np.ndarray    # (n,)
    assoc: np.ndarray      # (n,)

    def to_candidates(self) -> list[Candidate]:
        return [
            Candidate(
                pair=PairedBox.from_flat(self.pairs[i]),
                cls_prev=float(self.cls_prev[i]),
                cls_cur=float(self.cls_cur[i]),
                assoc=float(self.assoc[i]),
                index=i,
            )
            for i in range(self.pairs.shape[0])
        ]


@runtime_checkable
class Denoiser(Protocol):
    """Interface contract: one candidate per input row, order preserved."""

    def denoise(self, z: np.ndarray, s: int, ctx: FrameContext) -> list[Candidate]:
        """Refine signal-space rows ``z`` (n, 8) at timestep ``s``."""
        ...


class IdentityDenoiser:
    """Returns its input unchanged with unit scores; useful as a test stub."""

    def denoise_batch(self, z: np.ndarray, s: int, ctx: FrameContext) -> DenoisedBatch:
        z = np.asarray(z, dtype=np.float64)
        n = z.shape[0]
        ones = np.ones(n)
        return DenoisedBatch(z.copy(), ones.copy(), ones.copy(), ones.copy())

    def denoise(self, z: np.ndarray, s: int, ctx: FrameContext) -> list[Candidate]:
        return self.denoise_batch(z, s, ctx).to_candidates()


@dataclass(frozen=True)
class OracleConfig:
    """Score model of the ground-truth oracle (test instrumentation).

    ``far_floor``: below this paired-box overlap a row counts as off-target
    unless one of its centers lies inside a ground-truth box. ``far_score``
    is the association score assigned to off-target rows and must sit below
    the tracker's confidence gate. ``missing_penalty`` multiplies the score
    when the snapped identity is absent in one of the two frames.
    ``basin_floor``: rows whose best overlap is weaker than this snap by
    center distance instead, so oversized noise boxes don't all pile onto
    whichever object happens to be largest. ``tie_margin`` scales a small
    confidence bonus for rows whose input already covered the target,
    mirroring a trained head's preference for good proposals.
    ``score_floor`` sets how much of the association score is presence
    (landing on a target at all) versus geometric tightness; a head mostly
    scores presence, so the floor sits high.
    ``snap_cap`` bounds the emitted box's residual from its target at
    snap_cap * diagonal / fidelity, emulating how a regression head lands
    near the object no matter how far the proposal started. The bound
    loosens as fidelity falls and vanishes at fidelity 0, where the output
    must equal the input.
    """

    far_floor: float = 0.05
    far_score: float = 0.05
    missing_penalty: float = 0.2
    missing_cls: float = 0.1
    basin_floor: float = 0.2
    tie_margin: float = 0.05
    score_floor: float = 0.75
    snap_cap: float = 0.035


class OracleDenoiser:
    """Snaps rows to the nearest ground-truth pair with configurable fidelity.

    Each input row picks the ground-truth pair maximizing paired-box IoU
    (ties to the lower identity; center distance decides when nothing
    overlaps). The emitted pair is ``fidelity * gt + (1 - fidelity) * input``.
    Scores scale with fidelity and with how well the emitted pair lands on
    its target; rows whose output stays off every target are scored below
    any usable confidence gate, as is everything when no ground truth
    exists in either frame.
    """

    def __init__(self, fidelity: float, config: OracleConfig | None = None,
                 scale: float = DEFAULT_SIGNAL_SCALE):
        if not 0.0 <= fidelity <= 1.0:
            raise ValueError("fidelity must lie in [0, 1]")
        self.fidelity = fidelity
        self.config = config or OracleConfig()
        self.scale = scale

    def _targets(self, ctx: FrameContext):
        """Build per-identity target pairs from the two frames' ground truth.

        Identities visible in only one frame reuse that frame's box for the
        missing slot and are flagged so their scores can be reduced.
        """
        prev = dict(ctx.gt_prev or [])
        cur = dict(ctx.gt_cur or [])
        ids = sorted(set(prev) | set(cur))
        rows, in_prev, in_cur = [], [], []
        for i in ids:
            pb = prev.get(i, cur.get(i))
            cb = cur.get(i, prev.get(i))
            rows.append(np.concatenate([pb.as_array(), cb.as_array()]))
            in_prev.append(i in prev)
            in_cur.append(i in cur)
        if not rows:
            return None
        return (
            np.stack(rows),
            np.asarray(in_prev, dtype=bool),
            np.asarray(in_cur, dtype=bool),
        )

    def denoise_batch(self, z: np.ndarray, s: int, ctx: FrameContext) -> DenoisedBatch:
        z = np.asarray(z, dtype=np.float64)
        n = z.shape[0]
        cfg = self.config
        targets = self._targets(ctx)
        if targets is None:
            low = np.full(n, cfg.far_score)
            return DenoisedBatch(z.copy(), low.copy(), low.copy(), low.copy())
        gt_pix, in_prev, in_cur = targets

        z_pix = signal_to_pixel(z, ctx.image_size, self.scale)
        if ctx.conditional:
            # Baseline head: the previous-frame member is the condition and
            # is left untouched; identity is decided by the current member
            # alone.
            overlaps = iou_matrix(z_pix[:, 4:], gt_pix[:, 4:])
        else:
            overlaps = iou3d_matrix(z_pix, gt_pix)
        snap = np.argmax(overlaps, axis=1)
        # Weakly overlapping rows (oversized or far noise boxes) snap by
        # center distance; pure area-argmax would starve small objects.
        weak = overlaps.max(axis=1) < cfg.basin_floor
        if np.any(weak):
            centers = z_pix[weak][:, [0, 1, 4, 5]]
            gt_centers = gt_pix[:, [0, 1, 4, 5]]
            if ctx.conditional:
                dist = np.linalg.norm(
                    centers[:, None, 2:] - gt_centers[None, :, 2:], axis=2
                )
            else:
                # The closer of the two members decides: a noise pair is
                # pulled onto whichever object either member sits nearest.
                dist = np.minimum(
                    np.linalg.norm(
                        centers[:, None, :2] - gt_centers[None, :, :2], axis=2
                    ),
                    np.linalg.norm(
                        centers[:, None, 2:] - gt_centers[None, :, 2:], axis=2
                    ),
                )
            snap[weak] = np.argmin(dist, axis=1)

        target_pix = gt_pix[snap]
        f = self.fidelity
        out_pix = z_pix.copy()
        blended = (4,) if ctx.conditional else (0, 4)
        for off in blended:
            sl = slice(off, off + 4)
            out_pix[:, sl] = f * target_pix[:, sl] + (1.0 - f) * z_pix[:, sl]
        if f > 0.0:
            out_pix = self._cap_residual(out_pix, target_pix, blended)

        # Fit of the emitted pair against its own target drives the scores;
        # a small input-fit bonus ranks well-placed proposals above noise
        # rows that merely get pulled onto the same target.
        fit_out = _rowwise_iou3d(out_pix, target_pix)
        fit_in = overlaps[np.arange(n), snap]
        assoc = (
            f
            * (cfg.score_floor + (1.0 - cfg.score_floor) * fit_out)
            * (1.0 - cfg.tie_margin * (1.0 - fit_in))
        )
        both = in_prev[snap] & in_cur[snap]
        assoc = np.where(both, assoc, assoc * cfg.missing_penalty)

        off_target = self._off_target(out_pix, gt_pix)
        assoc = np.where(off_target, cfg.far_score, assoc)

        cls_prev = np.where(in_prev[snap], f, cfg.missing_cls)
        cls_cur = np.where(in_cur[snap], f, cfg.missing_cls)
        cls_prev = np.where(off_target, cfg.far_score, cls_prev)
        cls_cur = np.where(off_target, cfg.far_score, cls_cur)

        out = pixel_to_signal(out_pix, ctx.image_size, self.scale)
        return DenoisedBatch(out, cls_prev, cls_cur, np.clip(assoc, 0.0, 1.0))

    def _cap_residual(
        self, out_pix: np.ndarray, target_pix: np.ndarray, members: tuple[int, ...]
    ) -> np.ndarray:
        """Pull emitted boxes to within the snap radius of their target."""
        cfg = self.config
        out = out_pix.copy()
        for off in members:
            tw = target_pix[:, off + 2]
            th = target_pix[:, off + 3]
            radius = cfg.snap_cap * np.hypot(tw, th) / self.fidelity
            delta_c = out[:, off : off + 2] - target_pix[:, off : off + 2]
            norm = np.linalg.norm(delta_c, axis=1)
            shrink = np.where(norm > radius, radius / np.maximum(norm, 1e-12), 1.0)
            out[:, off : off + 2] = (
                target_pix[:, off : off + 2] + delta_c * shrink[:, None]
            )
            delta_s = out[:, off + 2 : off + 4] - target_pix[:, off + 2 : off + 4]
            out[:, off + 2 : off + 4] = target_pix[:, off + 2 : off + 4] + np.clip(
                delta_s, -radius[:, None], radius[:, None]
            )
        return out

    def _off_target(self, out_pix: np.ndarray, gt_pix: np.ndarray) -> np.ndarray:
        """True for rows whose output overlaps no target and whose centers
        fall outside every target's extent in both frames."""
        best = iou3d_matrix(out_pix, gt_pix).max(axis=1)
        inside_any = np.zeros(out_pix.shape[0], dtype=bool)
        for off in (0, 4):
            cx, cy = out_pix[:, off], out_pix[:, off + 1]
            gx1 = gt_pix[:, off] - gt_pix[:, off + 2] / 2
            gx2 = gt_pix[:, off] + gt_pix[:, off + 2] / 2
            gy1 = gt_pix[:, off + 1] - gt_pix[:, off + 3] / 2
            gy2 = gt_pix[:, off + 1] + gt_pix[:, off + 3] / 2
            inside = (
                (cx[:, None] >= gx1[None, :]) & (cx[:, None] <= gx2[None, :])
                & (cy[:, None] >= gy1[None, :]) & (cy[:, None] <= gy2[None, :])
            )
            inside_any |= inside.any(axis=1)
        return (best < self.config.far_floor) & ~inside_any

    def denoise(self, z: np.ndarray, s: int, ctx: FrameContext) -> list[Candidate]:
        return self.denoise_batch(z, s, ctx).to_candidates()


def _rowwise_iou3d(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Paired-box IoU between aligned rows of two (n, 8) arrays."""
    n = a.shape[0]
    out = np.empty(n)
    for start in range(0, n, 256):
        sl = slice(start, min(start + 256, n))
        block = iou3d_matrix(a[sl], b[sl])
        out[sl] = np.diagonal(block)
    return out


class DetectionSnapDenoiser:
    """Snaps each row member onto the best-overlapping external detection.

    Previous members snap to frame t-1 detections, current members to
    frame t detections (independently, ties broken by higher confidence
    then lower index). Class scores copy the detection confidences; the
    association score blends the snapped pair's geometric consistency
    iou(prev_det, cur_det) with min(conf_prev, conf_cur).
    """

    def __init__(self, scale: float = DEFAULT_SIGNAL_SCALE):
        self.scale = scale

    @staticmethod
    def _snap_frame(boxes_pix: np.ndarray, dets: Sequence[tuple[BBox, float]]):
        det_arr = np.stack([d[0].as_array() for d in dets])
        confs = np.asarray([d[1] for d in dets], dtype=np.float64)
        overlaps = iou_matrix(boxes_pix, det_arr)
        # Rank overlap first, then confidence, then lower index.
        n_det = det_arr.shape[0]
        rank = overlaps + confs[None, :] * 1e-9 - np.arange(n_det)[None, :] * 1e-12
        pick = np.argmax(rank, axis=1)
        return det_arr[pick], confs[pick], pick

    def denoise_batch(self, z: np.ndarray, s: int, ctx: FrameContext) -> DenoisedBatch:
        z = np.asarray(z, dtype=np.float64)
        n = z.shape[0]
        z_pix = signal_to_pixel(z, ctx.image_size, self.scale)
        out_pix = z_pix.copy()
        cls_prev = np.zeros(n)
        cls_cur = np.zeros(n)

        have_prev = bool(ctx.det_prev)
        have_cur = bool(ctx.det_cur)
        if have_prev and not ctx.conditional:
            boxes, confs, _ = self._snap_frame(z_pix[:, :4], ctx.det_prev)
            out_pix[:, :4] = boxes
            cls_prev = confs
        elif ctx.conditional:
            cls_prev = np.ones(n)
        if have_cur:
            boxes, confs, _ = self._snap_frame(z_pix[:, 4:], ctx.det_cur)
            out_pix[:, 4:] = boxes
            cls_cur = confs

        if (have_prev or ctx.conditional) and have_cur:
            consistency = _rowwise_iou(out_pix[:, :4], out_pix[:, 4:])
            assoc = 0.5 * (consistency + np.minimum(cls_prev, cls_cur))
        else:
            assoc = np.zeros(n)

        out = pixel_to_signal(out_pix, ctx.image_size, self.scale)
        return DenoisedBatch(out, cls_prev, cls_cur, np.clip(assoc, 0.0, 1.0))

    def denoise(self, z: np.ndarray, s: int, ctx: FrameContext) -> list[Candidate]:
        return self.denoise_batch(z, s, ctx).to_candidates()


def _rowwise_iou(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    out = np.empty(n)
    for start in range(0, n, 256):
        sl = slice(start, min(start + 256, n))
        out[sl] = np.diagonal(iou_matrix(a[sl], b[sl]))
    return out


# ---------------------------------------------------------------------------
# Deterministic-weight reference of the spatial-temporal fusion block and the
# association score head. Only shape and information-flow contracts are
# claimed; the weights are seeded, bias-free stand-ins for a trained model.
# ---------------------------------------------------------------------------


@dataclass
class StfWeights:
    """Shared projection weights for both frame slots of the fusion block.

    ``w_project`` maps a query to a pair of batched projections P1 (d x h)
    and P2 (h x 1); ``w_out`` maps the flattened fused feature (2R) back to
    a d-dimensional query; ``w_assoc``/``b_assoc`` form the score head on
    the concatenated fused queries.
    """

    feature_dim: int
    roi_cells: int
    inner_dim: int
    w_project: np.ndarray   # (d, d*h + h)
    w_out: np.ndarray       # (2R, d)
    w_assoc: np.ndarray     # (2d,)
    b_assoc: float = 0.0

    @classmethod
    def seeded(cls, feature_dim: int = 16, roi_cells: int = 49,
               inner_dim: int = 8, seed: int = 0) -> "StfWeights":
        rng = np.random.default_rng(seed)

        def xavier(shape):
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            return rng.uniform(-limit, limit, size=shape)

        d, h, r = feature_dim, inner_dim, roi_cells
        return cls(
            feature_dim=d,
            roi_cells=r,
            inner_dim=h,
            w_project=xavier((d, d * h + h)),
            w_out=xavier((2 * r, d)),
            w_assoc=xavier((2 * d, 1))[:, 0],
        )


def stf_fuse(
    f_roi_prev: np.ndarray,
    f_roi_cur: np.ndarray,
    q_prev: np.ndarray,
    q_cur: np.ndarray,
    weights: StfWeights,
) -> tuple[np.ndarray, np.ndarray]:
    """Exchange temporal information between the two frame slots.

    For each slot i with partner j: project the slot's query into batched
    matrices P1, P2, multiply them through the concatenated RoI features of
    both frames, and map the result back to a query. Output shape matches
    the input queries (n, d).
    """
    f_roi_prev = np.asarray(f_roi_prev, dtype=np.float64)
    f_roi_cur = np.asarray(f_roi_cur, dtype=np.float64)
    q_prev = np.asarray(q_prev, dtype=np.float64)
    q_cur = np.asarray(q_cur, dtype=np.float64)

    n, r, d = f_roi_prev.shape
    if f_roi_cur.shape != (n, r, d) or q_prev.shape != (n, d) or q_cur.shape != (n, d):
        raise ValueError("inconsistent feature/query shapes")
    if r != weights.roi_cells or d != weights.feature_dim:
        raise ValueError("shapes do not match the fusion weights")

    def one_slot(q, f_own, f_other):
        h = weights.inner_dim
        proj = q @ weights.w_project                      # (n, d*h + h)
        p1 = proj[:, : d * h].reshape(n, d, h)
        p2 = proj[:, d * h:].reshape(n, h, 1)
        concat = np.concatenate([f_own, f_other], axis=1)  # (n, 2R, d)
        feat = concat @ p1                                 # (n, 2R, h)
        feat = (feat @ p2)[..., 0]                         # (n, 2R)
        return feat @ weights.w_out                        # (n, d)

    return (
        one_slot(q_prev, f_roi_prev, f_roi_cur),
        one_slot(q_cur, f_roi_cur, f_roi_prev),
    )


def association_score_head(
    fused_prev: np.ndarray, fused_cur: np.ndarray, weights: StfWeights
) -> np.ndarray:
    """Squash a linear map of the concatenated fused queries into [0, 1]."""
    fused_prev = np.asarray(fused_prev, dtype=np.float64)
    fused_cur = np.asarray(fused_cur, dtype=np.float64)
    if fused_prev.shape != fused_cur.shape or fused_prev.shape[1] != weights.feature_dim:
        raise ValueError("inconsistent fused feature shapes")
    logits = np.concatenate([fused_prev, fused_cur], axis=1) @ weights.w_assoc
    logits = logits + weights.b_assoc
    return 1.0 / (1.0 + np.exp(-logits))
