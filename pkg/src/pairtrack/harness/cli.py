"""Command-line entry point.

Subcommands: simulate, track, eval, ablate, sweep, robustness. Exit codes:
0 success, 1 usage error, 2 data error. The default seed comes from
PAIRTRACK_SEED when set.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from ..denoiser import DetectionSnapDenoiser, OracleDenoiser
from ..diffusion import PaddingStrategy, PerturbationSchedule
from ..metrics import evaluate
from ..pipeline import Variant, run_sequence
from ..simulator import (
    CrowdedMotion,
    LinearMotion,
    NonLinearMotion,
    SceneSpec,
    generate,
)
from .config import (
    config_snapshot,
    load_config_file,
    resolve_oracle,
    resolve_pipeline_config,
)
from .experiments import ablate, robustness, sweep, write_csv
from .io import (
    MotFormatError,
    detections_from_rows,
    parse_motchallenge,
    parse_results,
    parse_seqinfo,
    scene_from_gt,
    write_gt,
    write_results,
    write_seqinfo,
)
from .manifest import RunManifest, write_manifest

__all__ = ["main"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise UsageError(message)


def _default_seed() -> int:
    return int(os.environ.get("PAIRTRACK_SEED", "0"))


def _add_common_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file")
    p.add_argument("--n-test", type=int, dest="n_test")
    p.add_argument("--steps", type=int)
    p.add_argument("--proportion", type=float)
    p.add_argument("--padding", choices=[s.value for s in PaddingStrategy])
    p.add_argument(
        "--perturbation", choices=[s.value for s in PerturbationSchedule]
    )
    p.add_argument("--variant", choices=[v.value for v in Variant])
    p.add_argument("--fidelity", type=float)
    p.add_argument("--seed", type=int, default=None)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pairtrack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a synthetic scene")
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--objects", type=int, default=8)
    sim.add_argument("--frames", type=int, default=30)
    sim.add_argument(
        "--motion", choices=["linear", "nonlinear", "crowded"], default="linear"
    )
    sim.add_argument("--turn-rate", type=float, default=0.5)
    sim.add_argument("--crossover-rate", type=float, default=0.5)
    sim.add_argument("--density", type=float, default=0.35)
    sim.add_argument("--occlusion", type=float, default=0.0)
    sim.add_argument("--speed-min", type=float, default=2.0)
    sim.add_argument("--speed-max", type=float, default=8.0)
    sim.add_argument("--image-size", default="1920x1080")
    sim.add_argument("--seed", type=int, default=None)

    trk = sub.add_parser("track", help="run the pipeline over a sequence")
    src = trk.add_mutually_exclusive_group(required=True)
    src.add_argument("--gt", help="ground-truth file (oracle denoiser)")
    src.add_argument("--det", help="detection file (snap denoiser)")
    trk.add_argument("--seqinfo", help="seqinfo.ini with image size")
    trk.add_argument("--image-size", help="WxH when no seqinfo is given")
    trk.add_argument("--out", required=True, help="result file")
    trk.add_argument(
        "--denoiser", choices=["oracle", "snap"], default=None,
        help="defaults to oracle with --gt, snap with --det",
    )
    _add_common_pipeline_flags(trk)

    ev = sub.add_parser("eval", help="score a result against ground truth")
    ev.add_argument("--gt", required=True)
    ev.add_argument("--result", required=True)
    ev.add_argument("--image-size", default="1920x1080")
    ev.add_argument("--csv", help="append a CSV row here")

    ab = sub.add_parser("ablate", help="factor-grid ablations")
    ab.add_argument("--gt", required=True)
    ab.add_argument("--out", required=True, help="CSV output")
    ab.add_argument("--seqinfo")
    ab.add_argument("--image-size")
    ab.add_argument("--proportions", default="0,0.25,0.5,0.75,1.0")
    ab.add_argument("--paddings", default="repeat,gaussian,poisson,uniform,full")
    ab.add_argument(
        "--perturbations", default="constant,linear,exponential,logarithmic"
    )
    _add_common_pipeline_flags(ab)

    sw = sub.add_parser("sweep", help="box-count x step-count grid")
    sw.add_argument("--gt", required=True)
    sw.add_argument("--out", required=True)
    sw.add_argument("--seqinfo")
    sw.add_argument("--image-size")
    sw.add_argument("--boxes", default="100,500")
    sw.add_argument("--step-counts", default="1,2,4")
    sw.add_argument("--n-seeds", type=int, default=3)
    _add_common_pipeline_flags(sw)

    rb = sub.add_parser("robustness", help="MOTA vs detection perturbation")
    rb.add_argument("--gt", required=True)
    rb.add_argument("--out", required=True)
    rb.add_argument("--seqinfo")
    rb.add_argument("--image-size")
    rb.add_argument("--alphas", default="0,0.1,0.2,0.3,0.4,0.5")
    rb.add_argument("--n-seeds", type=int, default=5)
    _add_common_pipeline_flags(rb)

    return parser


def _parse_image_size(raw: str) -> tuple[int, int]:
    try:
        w, h = raw.lower().split("x")
        return int(w), int(h)
    except ValueError as exc:
        raise UsageError(f"bad --image-size {raw!r}, expected WxH") from exc


def _resolve_image_size(args) -> tuple[int, int]:
    if getattr(args, "seqinfo", None):
        return parse_seqinfo(args.seqinfo)[0]
    if getattr(args, "image_size", None):
        return _parse_image_size(args.image_size)
    gt = getattr(args, "gt", None)
    sidecar = Path(gt).parent / "seqinfo.ini" if gt else None
    if sidecar is not None and sidecar.exists():
        return parse_seqinfo(sidecar)[0]
    return (1920, 1080)


def _pipeline_overrides(args) -> dict:
    return {
        k: getattr(args, k, None)
        for k in ("n_test", "steps", "proportion", "padding", "perturbation",
                  "variant")
    }


def _cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    image_size = _parse_image_size(args.image_size)
    if args.motion == "linear":
        motion = LinearMotion()
    elif args.motion == "nonlinear":
        motion = NonLinearMotion(
            turn_rate=args.turn_rate, crossover_rate=args.crossover_rate
        )
    else:
        motion = CrowdedMotion(density=args.density)
    spec = SceneSpec(
        n_objects=args.objects,
        duration=args.frames,
        image_size=image_size,
        motion=motion,
        occlusion_rate=args.occlusion,
        speed=(args.speed_min, args.speed_max),
        seed=seed,
    )
    scene = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_gt(scene, out / "gt.txt")
    write_seqinfo(out / "seqinfo.ini", image_size, scene.n_frames)
    write_manifest(
        RunManifest(
            command="simulate",
            seed=seed,
            config={
                "objects": args.objects,
                "frames": args.frames,
                "motion": args.motion,
                "turn_rate": args.turn_rate,
                "crossover_rate": args.crossover_rate,
                "density": args.density,
                "occlusion": args.occlusion,
                "speed": [args.speed_min, args.speed_max],
                "image_size": list(image_size),
            },
            outputs={"gt": str(out / "gt.txt"), "seqinfo": str(out / "seqinfo.ini")},
        ),
        out / "manifest.json",
    )
    print(f"wrote {out / 'gt.txt'} ({scene.n_frames} frames)")
    return 0


def _load_scene_args(args):
    image_size = _resolve_image_size(args)
    rows = parse_motchallenge(args.gt)
    return scene_from_gt(rows, image_size), image_size


def _cmd_track(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    image_size = _resolve_image_size(args)
    file_values = load_config_file(args.config)
    cfg = resolve_pipeline_config(file_values, **_pipeline_overrides(args))
    fidelity, oracle_cfg = resolve_oracle(file_values, fidelity=args.fidelity)

    scene = None
    detections = None
    if args.gt:
        scene = scene_from_gt(parse_motchallenge(args.gt), image_size)
        denoiser_kind = args.denoiser or "oracle"
    else:
        detections = detections_from_rows(parse_motchallenge(args.det))
        denoiser_kind = args.denoiser or "snap"
    if denoiser_kind == "oracle":
        if scene is None:
            raise UsageError("the oracle denoiser needs --gt")
        denoiser = OracleDenoiser(fidelity, config=oracle_cfg)
    else:
        denoiser = DetectionSnapDenoiser()
        if detections is None:
            detections = {
                f: [(b, 1.0) for _, b in scene.visible(f)]
                for f in range(1, scene.n_frames + 1)
            }

    result = run_sequence(
        cfg, denoiser, scene=scene, detections=detections,
        image_size=image_size, seed=seed,
    )
    write_results(result, args.out)
    write_manifest(
        RunManifest(
            command="track",
            seed=seed,
            config=config_snapshot(cfg),
            inputs={"gt": args.gt or "", "det": args.det or ""},
            outputs={"result": args.out},
            extra={"denoiser": denoiser_kind, "fidelity": fidelity,
                   "image_size": list(image_size)},
        ),
        Path(args.out).with_suffix(".manifest.json"),
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    image_size = _parse_image_size(args.image_size)
    scene = scene_from_gt(parse_motchallenge(args.gt), image_size)
    result = parse_results(args.result)
    report = evaluate(scene, result)
    print(report.to_text())
    if args.csv:
        new = not Path(args.csv).exists()
        with open(args.csv, "a") as fh:
            if new:
                fh.write(report.csv_header() + "\n")
            fh.write(report.to_csv_row() + "\n")
    return 0


def _experiment_setup(args):
    seed = args.seed if args.seed is not None else _default_seed()
    file_values = load_config_file(args.config)
    cfg = resolve_pipeline_config(file_values, **_pipeline_overrides(args))
    fidelity, oracle_cfg = resolve_oracle(file_values, fidelity=args.fidelity)
    scene, _ = _load_scene_args(args)
    return seed, cfg, fidelity, oracle_cfg, scene


def _floats(raw: str) -> list[float]:
    return [float(v) for v in raw.split(",") if v.strip()]


def _ints(raw: str) -> list[int]:
    return [int(v) for v in raw.split(",") if v.strip()]


def _cmd_ablate(args) -> int:
    seed, cfg, fidelity, oracle_cfg, scene = _experiment_setup(args)
    rows = ablate(
        scene,
        cfg,
        fidelity,
        proportions=_floats(args.proportions),
        paddings=[PaddingStrategy(v) for v in args.paddings.split(",") if v],
        perturbations=[
            PerturbationSchedule(v) for v in args.perturbations.split(",") if v
        ],
        seed=seed,
        oracle_cfg=oracle_cfg,
    )
    write_csv(rows, args.out)
    _write_experiment_manifest("ablate", args, seed, cfg, fidelity)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def _cmd_sweep(args) -> int:
    seed, cfg, fidelity, oracle_cfg, scene = _experiment_setup(args)
    rows = sweep(
        scene,
        cfg,
        fidelity,
        box_counts=_ints(args.boxes),
        step_counts=_ints(args.step_counts),
        seeds=range(seed, seed + args.n_seeds),
        oracle_cfg=oracle_cfg,
    )
    write_csv(rows, args.out)
    _write_experiment_manifest("sweep", args, seed, cfg, fidelity)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def _cmd_robustness(args) -> int:
    seed, cfg, fidelity, oracle_cfg, scene = _experiment_setup(args)
    rows = robustness(
        scene,
        cfg,
        fidelity,
        alphas=_floats(args.alphas),
        seeds=range(seed, seed + args.n_seeds),
        oracle_cfg=oracle_cfg,
    )
    write_csv(rows, args.out)
    _write_experiment_manifest("robustness", args, seed, cfg, fidelity)
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


def _write_experiment_manifest(command, args, seed, cfg, fidelity) -> None:
    write_manifest(
        RunManifest(
            command=command,
            seed=seed,
            config=config_snapshot(cfg),
            inputs={"gt": args.gt},
            outputs={"csv": args.out},
            extra={"fidelity": fidelity, "argv": sys.argv[1:]},
        ),
        Path(args.out).with_suffix(".manifest.json"),
    )


_COMMANDS = {
    "simulate": _cmd_simulate,
    "track": _cmd_track,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "sweep": _cmd_sweep,
    "robustness": _cmd_robustness,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (MotFormatError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
