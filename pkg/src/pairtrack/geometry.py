"""Box algebra for paired-box tracking.

Boxes are center-parameterized (cx, cy, w, h); corner form is computed on
demand. A PairedBox holds the same object's boxes in two adjacent frames
and flattens to 8 scalars. Overlap measures come in the plain 2D flavor
and a paired ("3D") flavor that sums areas over both frames.

Degenerate (zero-area) boxes are legal inputs; every ratio involving an
empty union or enclosure is defined to 0 by convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "BBox",
    "PairedBox",
    "iou",
    "giou",
    "iou3d",
    "giou3d",
    "nms2d",
    "nms3d",
    "iou_matrix",
    "iou3d_matrix",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with center (cx, cy), width w and height h, in pixels."""

    cx: float
    cy: float
    w: float
    h: float

    def corners(self) -> tuple[float, float, float, float]:
        """Return (x1, y1, x2, y2) with x1 <= x2 and y1 <= y2."""
        return (
            self.cx - 0.5 * self.w,
            self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w,
            self.cy + 0.5 * self.h,
        )

    @classmethod
    def from_corners(cls, x1: float, y1: float, x2: float, y2: float) -> "BBox":
        return cls(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1)

    @property
    def area(self) -> float:
        return max(self.w, 0.0) * max(self.h, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)


@dataclass(frozen=True)
class PairedBox:
    """Same-identity boxes in two adjacent frames; the 8-scalar sample unit."""

    prev: BBox
    cur: BBox

    def flatten(self) -> np.ndarray:
        """Flatten to [prev.cx, prev.cy, prev.w, prev.h, cur.cx, cur.cy, cur.w, cur.h]."""
        return np.concatenate([self.prev.as_array(), self.cur.as_array()])

    @classmethod
    def from_flat(cls, row: Sequence[float]) -> "PairedBox":
        r = np.asarray(row, dtype=np.float64)
        if r.shape != (8,):
            raise ValueError(f"paired box row must have 8 scalars, got shape {r.shape}")
        return cls(BBox(*r[:4]), BBox(*r[4:]))


def _corner_area(box: BBox) -> float:
    # Derived from corner form so intersections never exceed it in float.
    x1, y1, x2, y2 = box.corners()
    return max(x2 - x1, 0.0) * max(y2 - y1, 0.0)


def _intersection_area(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def _enclosing_area(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.corners()
    bx1, by1, bx2, by2 = b.corners()
    return (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; 0 when the union is empty."""
    inter = _intersection_area(a, b)
    union = _corner_area(a) + _corner_area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou(a: BBox, b: BBox) -> float:
    """Generalized IoU: iou minus (enclosure - union) / enclosure; in (-1, 1]."""
    inter = _intersection_area(a, b)
    union = _corner_area(a) + _corner_area(b) - inter
    enclosing = _enclosing_area(a, b)
    if enclosing <= 0.0:
        return 0.0
    if union <= 0.0:
        return -(enclosing - union) / enclosing
    return inter / union - (enclosing - union) / enclosing


def _paired_union(d: PairedBox, g: PairedBox) -> float:
    return (
        _corner_area(d.prev) + _corner_area(g.prev) - _intersection_area(d.prev, g.prev)
        + _corner_area(d.cur) + _corner_area(g.cur) - _intersection_area(d.cur, g.cur)
    )


def iou3d(d: PairedBox, g: PairedBox) -> float:
    """Paired-box IoU: summed per-frame intersection over summed per-frame union."""
    inter = _intersection_area(d.prev, g.prev) + _intersection_area(d.cur, g.cur)
    union = _paired_union(d, g)
    if union <= 0.0:
        return 0.0
    return inter / union


def giou3d(d: PairedBox, g: PairedBox) -> float:
    """Paired-box GIoU.

    The penalty wraps the summed per-frame difference in a single absolute
    value: |sum_i (enclosure_i - union_i)| / |sum_i enclosure_i|, where i
    ranges over the two frames.
    """
    enclosure = _enclosing_area(d.prev, g.prev) + _enclosing_area(d.cur, g.cur)
    if enclosure <= 0.0:
        return 0.0
    union = _paired_union(d, g)
    return iou3d(d, g) - abs(enclosure - union) / abs(enclosure)


def _nms(scores: Sequence[float], overlap_fn, threshold: float) -> list[int]:
    """Greedy suppression shared by nms2d/nms3d.

    Candidates are visited in descending score order (ties broken by lower
    original index); one is removed iff its overlap with an already-kept
    higher-scored candidate exceeds the threshold (strict).
    """
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    kept: list[int] = []
    for idx in order:
        i = int(idx)
        if all(overlap_fn(i, j) <= threshold for j in kept):
            kept.append(i)
    return kept


def nms2d(boxes: Sequence[BBox], scores: Sequence[float], threshold: float) -> list[int]:
    """Greedy 2D non-maximum suppression; returns kept indices in score order."""
    if len(boxes) != len(scores):
        raise ValueError("boxes and scores must have equal length")
    if not boxes:
        return []
    arr = np.stack([b.as_array() for b in boxes])
    mat = iou_matrix(arr, arr)
    return _nms(scores, lambda i, j: mat[i, j], threshold)


def nms3d(pairs: Sequence[PairedBox], scores: Sequence[float], threshold: float) -> list[int]:
    """Greedy paired-box suppression on iou3d; returns kept indices in score order."""
    if len(pairs) != len(scores):
        raise ValueError("pairs and scores must have equal length")
    if not pairs:
        return []
    arr = np.stack([p.flatten() for p in pairs])
    mat = iou3d_matrix(arr, arr)
    return _nms(scores, lambda i, j: mat[i, j], threshold)


# Vectorized counterparts on raw arrays. Rows are center-form boxes (n, 4)
# or flattened pairs (n, 8); used by the denoisers and suppression on full
# proposal batches.


def _corners(boxes: np.ndarray) -> np.ndarray:
    half = boxes[:, 2:4] * 0.5
    return np.concatenate([boxes[:, :2] - half, boxes[:, :2] + half], axis=1)


def _pairwise_inter_union(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ca, cb = _corners(a), _corners(b)
    lt = np.maximum(ca[:, None, :2], cb[None, :, :2])
    rb = np.minimum(ca[:, None, 2:], cb[None, :, 2:])
    wh = np.clip(rb - lt, 0.0, None)
    inter = wh[..., 0] * wh[..., 1]
    area_a = np.clip(ca[:, 2] - ca[:, 0], 0, None) * np.clip(ca[:, 3] - ca[:, 1], 0, None)
    area_b = np.clip(cb[:, 2] - cb[:, 0], 0, None) * np.clip(cb[:, 3] - cb[:, 1], 0, None)
    union = area_a[:, None] + area_b[None, :] - inter
    return inter, union


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between center-form box arrays of shape (n, 4) and (m, 4)."""
    inter, union = _pairwise_inter_union(
        np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    )
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def iou3d_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise paired-box IoU between flattened-pair arrays (n, 8) and (m, 8)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    inter_p, union_p = _pairwise_inter_union(a[:, :4], b[:, :4])
    inter_c, union_c = _pairwise_inter_union(a[:, 4:], b[:, 4:])
    inter = inter_p + inter_c
    union = union_p + union_c
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out
