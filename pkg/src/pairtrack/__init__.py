"""Paired-box denoising-diffusion engine for multi-object tracking.

Boxes from two adjacent frames form one 8-scalar sample; tracking is the
act of refining a batch of noisy paired boxes into per-object candidates
and feeding them through a Kalman-backed track lifecycle.
"""

from .denoiser import (
    Candidate,
    DetectionSnapDenoiser,
    FrameContext,
    IdentityDenoiser,
    OracleConfig,
    OracleDenoiser,
)
from .diffusion import (
    NoiseSchedule,
    PaddingStrategy,
    PerturbationSchedule,
    cosine_schedule,
)
from .geometry import BBox, PairedBox, giou, giou3d, iou, iou3d, nms2d, nms3d
from .metrics import MetricsReport, evaluate
from .pipeline import PipelineConfig, Variant, run_pair, run_sequence
from .simulator import (
    CrowdedMotion,
    LinearMotion,
    NonLinearMotion,
    SceneGroundTruth,
    SceneSpec,
    generate,
)
from .tracker import Tracker, TrackerConfig, TrackingResult

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "PairedBox",
    "iou",
    "giou",
    "iou3d",
    "giou3d",
    "nms2d",
    "nms3d",
    "NoiseSchedule",
    "cosine_schedule",
    "PaddingStrategy",
    "PerturbationSchedule",
    "Candidate",
    "FrameContext",
    "OracleDenoiser",
    "OracleConfig",
    "DetectionSnapDenoiser",
    "IdentityDenoiser",
    "Tracker",
    "TrackerConfig",
    "TrackingResult",
    "SceneSpec",
    "SceneGroundTruth",
    "LinearMotion",
    "NonLinearMotion",
    "CrowdedMotion",
    "generate",
    "MetricsReport",
    "evaluate",
    "PipelineConfig",
    "Variant",
    "run_pair",
    "run_sequence",
]
