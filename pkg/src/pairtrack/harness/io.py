"""MOTChallenge text interchange.

Rows are comma-separated ``frame,id,bb_left,bb_top,bb_width,bb_height,
conf,...``: ground-truth rows carry a class id and a visibility column,
detection and result rows carry ``-1`` world coordinates. Frames are
1-based; files may list frames out of order (sorted on load). Boxes are
converted between the corner-origin file format and center-form on the
way in and out.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..geometry import BBox
from ..simulator import GtEntry, SceneGroundTruth
from ..tracker import ResultRow, TrackingResult

__all__ = [
    "MotRow",
    "MotFormatError",
    "parse_motchallenge",
    "write_gt",
    "write_results",
    "parse_results",
    "scene_from_gt",
    "detections_from_rows",
    "write_detections",
    "write_seqinfo",
    "parse_seqinfo",
]


class MotFormatError(ValueError):
    """Malformed interchange file; message carries the line number."""


@dataclass(frozen=True)
class MotRow:
    frame: int
    track_id: int
    box: BBox
    conf: float
    cls: int = 1
    visibility: float = 1.0


def parse_motchallenge(path: str | Path) -> dict[int, list[MotRow]]:
    """Parse a GT, detection or result file into per-frame rows."""
    frames: dict[int, list[MotRow]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 7:
                raise MotFormatError(
                    f"{path}: line {lineno}: expected >= 7 comma-separated "
                    f"fields, got {len(parts)}"
                )
            try:
                frame = int(float(parts[0]))
                track_id = int(float(parts[1]))
                left, top, w, h = (float(v) for v in parts[2:6])
                conf = float(parts[6])
                cls = int(float(parts[7])) if len(parts) > 7 else 1
                vis = float(parts[8]) if len(parts) > 8 else 1.0
            except ValueError as exc:
                raise MotFormatError(
                    f"{path}: line {lineno}: {exc}"
                ) from exc
            box = BBox(left + w / 2.0, top + h / 2.0, w, h)
            frames.setdefault(frame, []).append(
                MotRow(frame, track_id, box, conf, cls, vis)
            )
    return {f: frames[f] for f in sorted(frames)}


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def write_gt(scene: SceneGroundTruth, path: str | Path) -> None:
    """Write a scene as GT rows; visibility encodes the occlusion flag."""
    with open(path, "w") as fh:
        for frame in sorted(scene.frames):
            for e in sorted(scene.frames[frame], key=lambda e: e.track_id):
                x1, y1, _, _ = e.box.corners()
                vis = 1.0 if e.visible else 0.0
                fh.write(
                    f"{frame},{e.track_id},{_fmt(x1)},{_fmt(y1)},"
                    f"{_fmt(e.box.w)},{_fmt(e.box.h)},1,1,{vis:.1f}\n"
                )


def scene_from_gt(
    rows: dict[int, list[MotRow]], image_size: tuple[int, int]
) -> SceneGroundTruth:
    frames = {
        f: [
            GtEntry(r.track_id, r.box, r.visibility > 0.5)
            for r in sorted(rs, key=lambda r: r.track_id)
        ]
        for f, rs in rows.items()
    }
    n_frames = max(frames) if frames else 0
    return SceneGroundTruth(image_size=image_size, n_frames=n_frames, frames=frames)


def detections_from_rows(
    rows: dict[int, list[MotRow]]
) -> dict[int, list[tuple[BBox, float]]]:
    return {f: [(r.box, r.conf) for r in rs] for f, rs in rows.items()}


def write_detections(
    detections: dict[int, list[tuple[BBox, float]]], path: str | Path
) -> None:
    with open(path, "w") as fh:
        for frame in sorted(detections):
            for box, conf in detections[frame]:
                x1, y1, _, _ = box.corners()
                fh.write(
                    f"{frame},-1,{_fmt(x1)},{_fmt(y1)},{_fmt(box.w)},"
                    f"{_fmt(box.h)},{_fmt(conf)},-1,-1,-1\n"
                )


def write_results(result: TrackingResult, path: str | Path) -> None:
    """Emit result rows, deterministically ordered by (frame, id)."""
    with open(path, "w") as fh:
        for frame in sorted(result.frames):
            for row in sorted(result.frames[frame], key=lambda r: r.track_id):
                x1, y1, _, _ = row.box.corners()
                fh.write(
                    f"{frame},{row.track_id},{_fmt(x1)},{_fmt(y1)},"
                    f"{_fmt(row.box.w)},{_fmt(row.box.h)},{_fmt(row.score)},-1,-1,-1\n"
                )


def parse_results(path: str | Path) -> TrackingResult:
    rows = parse_motchallenge(path)
    result = TrackingResult()
    for frame, rs in rows.items():
        for r in rs:
            result.add(frame, ResultRow(r.track_id, r.box, r.conf))
    return result


def write_seqinfo(
    path: str | Path, image_size: tuple[int, int], n_frames: int,
    name: str = "synthetic",
) -> None:
    with open(path, "w") as fh:
        fh.write(
            "[Sequence]\n"
            f"name={name}\n"
            f"imWidth={image_size[0]}\n"
            f"imHeight={image_size[1]}\n"
            f"seqLength={n_frames}\n"
        )


def parse_seqinfo(path: str | Path) -> tuple[tuple[int, int], int]:
    """Returns ((width, height), sequence length)."""
    import configparser

    cp = configparser.ConfigParser()
    cp.read(path)
    sec = cp["Sequence"]
    return (
        (int(sec["imWidth"]), int(sec["imHeight"])),
        int(sec["seqLength"]),
    )
