"""Hungarian assignment and the paired-box detection objective.

The objective combines three terms over Hungarian-matched
(prediction, ground-truth) pairs: focal classification on the fused score
sqrt(class_score * association_score) per frame, L1 regression in
image-normalized coordinates, and the paired-box GIoU complement. Term
weights are (2, 5, 2) and the sum is normalized by the positive-match
count. Unmatched predictions contribute background focal terms only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .denoiser import Candidate
from .geometry import PairedBox, giou3d

__all__ = [
    "MatchSet",
    "LossBreakdown",
    "hungarian",
    "focal_loss",
    "match_cost",
    "detection_loss",
    "LAMBDA_CLS",
    "LAMBDA_REG",
    "LAMBDA_GIOU",
]

LAMBDA_CLS = 2.0
LAMBDA_REG = 5.0
LAMBDA_GIOU = 2.0

FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0
_EPS = 1e-7


@dataclass(frozen=True)
class MatchSet:
    """Injective assignment between predictions and ground-truth entries."""

    pairs: tuple[tuple[int, int], ...]
    unmatched_predictions: tuple[int, ...]
    unmatched_gts: tuple[int, ...]

    @property
    def n_pos(self) -> int:
        return len(self.pairs)


def hungarian(cost: np.ndarray) -> MatchSet:
    """Minimum-cost assignment on an n x m matrix of finite costs."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        n, m = cost.shape if cost.ndim == 2 else (0, 0)
        return MatchSet((), tuple(range(n)), tuple(range(m)))
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(zip(rows.tolist(), cols.tolist()))
    matched_r = set(rows.tolist())
    matched_c = set(cols.tolist())
    return MatchSet(
        pairs,
        tuple(i for i in range(cost.shape[0]) if i not in matched_r),
        tuple(j for j in range(cost.shape[1]) if j not in matched_c),
    )


def focal_loss(
    p: float, y: int, alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA
) -> float:
    """Standard focal loss for a binary label on probability ``p``."""
    p = min(max(p, _EPS), 1.0 - _EPS)
    if y == 1:
        return -alpha * (1.0 - p) ** gamma * math.log(p)
    return -(1.0 - alpha) * p ** gamma * math.log(1.0 - p)


def _fused_scores(pred: Candidate) -> tuple[float, float]:
    s = max(pred.assoc, 0.0)
    return (
        math.sqrt(max(pred.cls_prev, 0.0) * s),
        math.sqrt(max(pred.cls_cur, 0.0) * s),
    )


def _l1_normalized(
    pred: PairedBox, gt: PairedBox, image_size: tuple[int, int]
) -> float:
    w, h = image_size
    norm = np.tile([w, h, w, h], 2)
    return float(np.abs(pred.flatten() / norm - gt.flatten() / norm).sum())


def match_cost(
    pred: Candidate, gt: PairedBox, image_size: tuple[int, int] = (1, 1)
) -> float:
    """Assignment cost mirroring the loss terms; lower is better."""
    fp, fc = _fused_scores(pred)
    cls_cost = focal_loss(fp, 1) + focal_loss(fc, 1)
    reg_cost = _l1_normalized(pred.pair, gt, image_size)
    giou_cost = 1.0 - giou3d(pred.pair, gt)
    return LAMBDA_CLS * cls_cost + LAMBDA_REG * reg_cost + LAMBDA_GIOU * giou_cost


@dataclass(frozen=True)
class LossBreakdown:
    """Raw term sums plus the weighted, positive-normalized total."""

    cls: float
    reg: float
    giou_term: float
    total: float
    n_pos: int
    matches: MatchSet


def detection_loss(
    preds: Sequence[Candidate],
    gts: Sequence[PairedBox],
    image_size: tuple[int, int] = (1, 1),
) -> LossBreakdown:
    """Forward evaluation of the three-term training objective.

    Ground-truth class scores are 1 (single-class tracking). Unmatched
    predictions enter the classification sum as background (label 0) on
    their fused scores; unmatched ground truth contributes nothing here.
    """
    if not gts:
        matches = MatchSet((), tuple(range(len(preds))), ())
        cls = sum(
            focal_loss(f, 0) for p in preds for f in _fused_scores(p)
        )
        total = LAMBDA_CLS * cls / 1.0
        return LossBreakdown(cls, 0.0, 0.0, total, 1, matches)

    cost = np.array(
        [[match_cost(p, g, image_size) for g in gts] for p in preds]
    ).reshape(len(preds), len(gts))
    matches = hungarian(cost)

    cls = reg = giou_term = 0.0
    for pi, gi in matches.pairs:
        fp, fc = _fused_scores(preds[pi])
        cls += focal_loss(fp, 1) + focal_loss(fc, 1)
        reg += _l1_normalized(preds[pi].pair, gts[gi], image_size)
        giou_term += 1.0 - giou3d(preds[pi].pair, gts[gi])
    for pi in matches.unmatched_predictions:
        fp, fc = _fused_scores(preds[pi])
        cls += focal_loss(fp, 0) + focal_loss(fc, 0)

    n_pos = max(matches.n_pos, 1)
    total = (LAMBDA_CLS * cls + LAMBDA_REG * reg + LAMBDA_GIOU * giou_term) / n_pos
    return LossBreakdown(cls, reg, giou_term, total, n_pos, matches)
