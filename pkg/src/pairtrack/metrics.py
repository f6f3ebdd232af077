"""CLEAR-style tracking evaluation: MOTA, FP/FN, identity switches,
fragmentations, plus IDF1 from a global trajectory matching.

Per frame, correspondences from the previous frame are kept whenever both
ends still exist and overlap at the gate; the remainder is matched by
Hungarian assignment on IoU. A switch is counted when a ground-truth
trajectory's matched identity differs from the last one it ever had; a
fragmentation when a previously matched trajectory resumes being matched
after a gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import iou_matrix
from .simulator import SceneGroundTruth
from .tracker import TrackingResult

__all__ = ["MetricsReport", "evaluate"]


@dataclass(frozen=True)
class MetricsReport:
    mota: float
    idf1: float
    idsw: int
    frag: int
    fp: int
    fn: int
    gt_count: int

    def to_text(self) -> str:
        lines = [
            f"MOTA = {self.mota:.4f}",
            f"IDF1 = {self.idf1:.4f}",
            f"IDSW = {self.idsw}",
            f"Frag = {self.frag}",
            f"FP = {self.fp}",
            f"FN = {self.fn}",
            f"GT = {self.gt_count}",
        ]
        return "\n".join(lines)

    @staticmethod
    def csv_header() -> str:
        return "mota,idf1,idsw,frag,fp,fn,gt_count"

    def to_csv_row(self) -> str:
        return (
            f"{self.mota:.6f},{self.idf1:.6f},{self.idsw},{self.frag},"
            f"{self.fp},{self.fn},{self.gt_count}"
        )


def _grouped_result(result: TrackingResult, frame: int):
    rows = result.frames.get(frame, [])
    ids = [r.track_id for r in rows]
    boxes = (
        np.stack([r.box.as_array() for r in rows]) if rows else np.zeros((0, 4))
    )
    return ids, boxes


def evaluate(
    gt: SceneGroundTruth, result: TrackingResult, iou_gate: float = 0.5
) -> MetricsReport:
    """Score a tracking result against ground truth (visible entries only)."""
    frames = sorted(set(gt.frames) | set(result.frames))

    fp = fn = idsw = frag = 0
    gt_count = 0
    prev_match: dict[int, int] = {}      # gt id -> pred id in the last frame
    last_pred: dict[int, int] = {}       # gt id -> last matched pred id ever
    matched_before: set[int] = set()
    matched_prev_frame: set[int] = set()

    # Trajectory overlap counts for the global identity matching.
    gt_lengths: dict[int, int] = {}
    pred_lengths: dict[int, int] = {}
    overlap_counts: dict[tuple[int, int], int] = {}

    for frame in frames:
        gt_rows = gt.visible(frame)
        gt_ids = [g for g, _ in gt_rows]
        gt_boxes = (
            np.stack([b.as_array() for _, b in gt_rows])
            if gt_rows
            else np.zeros((0, 4))
        )
        pred_ids, pred_boxes = _grouped_result(result, frame)

        gt_count += len(gt_ids)
        for g in gt_ids:
            gt_lengths[g] = gt_lengths.get(g, 0) + 1
        for p in pred_ids:
            pred_lengths[p] = pred_lengths.get(p, 0) + 1

        overlaps = iou_matrix(gt_boxes, pred_boxes)
        for gi in range(len(gt_ids)):
            for pi in range(len(pred_ids)):
                if overlaps[gi, pi] >= iou_gate:
                    key = (gt_ids[gi], pred_ids[pi])
                    overlap_counts[key] = overlap_counts.get(key, 0) + 1

        # Keep last frame's correspondences that still hold at the gate.
        matches: dict[int, int] = {}
        used_preds: set[int] = set()
        pred_index = {p: i for i, p in enumerate(pred_ids)}
        for gi, g in enumerate(gt_ids):
            p = prev_match.get(g)
            if p is not None and p in pred_index and p not in used_preds:
                if overlaps[gi, pred_index[p]] >= iou_gate:
                    matches[g] = p
                    used_preds.add(p)

        free_gt = [gi for gi, g in enumerate(gt_ids) if g not in matches]
        free_pred = [
            pi for pi, p in enumerate(pred_ids) if p not in used_preds
        ]
        if free_gt and free_pred:
            sub = overlaps[np.ix_(free_gt, free_pred)]
            rows, cols = linear_sum_assignment(1.0 - sub)
            for r, c in zip(rows, cols):
                if sub[r, c] >= iou_gate:
                    matches[gt_ids[free_gt[r]]] = pred_ids[free_pred[c]]

        for g, p in matches.items():
            if g in last_pred and last_pred[g] != p:
                idsw += 1
            if g in matched_before and g not in matched_prev_frame:
                frag += 1
            last_pred[g] = p
        fn += len(gt_ids) - len(matches)
        fp += len(pred_ids) - len(matches)

        matched_before |= set(matches)
        matched_prev_frame = set(matches)
        prev_match = matches

    mota = float("nan") if gt_count == 0 else 1.0 - (fn + fp + idsw) / gt_count
    idf1 = _idf1(gt_lengths, pred_lengths, overlap_counts)
    return MetricsReport(
        mota=mota, idf1=idf1, idsw=idsw, frag=frag, fp=fp, fn=fn, gt_count=gt_count
    )


def _idf1(
    gt_lengths: dict[int, int],
    pred_lengths: dict[int, int],
    overlap_counts: dict[tuple[int, int], int],
) -> float:
    gt_total = sum(gt_lengths.values())
    pred_total = sum(pred_lengths.values())
    if gt_total + pred_total == 0:
        return 0.0
    gt_ids = sorted(gt_lengths)
    pred_ids = sorted(pred_lengths)
    if gt_ids and pred_ids:
        counts = np.zeros((len(gt_ids), len(pred_ids)))
        for (g, p), c in overlap_counts.items():
            counts[gt_ids.index(g), pred_ids.index(p)] = c
        rows, cols = linear_sum_assignment(-counts)
        idtp = counts[rows, cols].sum()
    else:
        idtp = 0.0
    return float(2.0 * idtp / (gt_total + pred_total))
