"""Flat sectioned key-value configuration with layered precedence.

Resolution order for every knob: CLI flag > config-file key > built-in
default. Files are INI-style with sections mirroring the component
configs::

    [pipeline]
    n_test = 500
    steps = 1
    proportion = 0.25
    padding = gaussian
    perturbation = logarithmic
    variant = diffusion

    [tracker]
    conf_threshold = 0.25
    det_threshold = 0.7

    [oracle]
    fidelity = 0.9
"""

from __future__ import annotations

import configparser
import dataclasses
from pathlib import Path
from typing import Any

from ..denoiser import OracleConfig
from ..diffusion import PaddingStrategy, PerturbationSchedule
from ..pipeline import PipelineConfig, Variant
from ..tracker import TrackerConfig

__all__ = ["load_config_file", "resolve_pipeline_config", "resolve_oracle",
           "config_snapshot"]

_PIPELINE_FIELDS = {
    "n_test": int,
    "steps": int,
    "proportion": float,
    "timesteps": int,
    "signal_scale": float,
    "default_motion": float,
    "padding": PaddingStrategy,
    "perturbation": PerturbationSchedule,
    "variant": Variant,
}

_TRACKER_FIELDS = {
    "conf_threshold": float,
    "det_threshold": float,
    "nms3d_threshold": float,
    "nms2d_threshold": float,
    "assoc_slots": int,
    "init_score_threshold": float,
    "iou_match_threshold": float,
    "max_lost_age": int,
}

_ORACLE_FIELDS = {
    "fidelity": float,
    "far_floor": float,
    "far_score": float,
    "missing_penalty": float,
    "missing_cls": float,
    "basin_floor": float,
    "tie_margin": float,
    "score_floor": float,
    "snap_cap": float,
}


def load_config_file(path: str | Path | None) -> dict[str, dict[str, str]]:
    """Read an INI config into raw string sections; empty without a path."""
    if path is None:
        return {}
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise FileNotFoundError(path)
    return {section: dict(cp[section]) for section in cp.sections()}


def _coerce(kind: Any, raw: str):
    if kind is bool:
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(kind, type) and issubclass(kind, (PaddingStrategy,
                                                    PerturbationSchedule,
                                                    Variant)):
        return kind(raw.strip().lower())
    return kind(raw)


def _layer(fields: dict, file_section: dict[str, str], overrides: dict) -> dict:
    out = {}
    for name, kind in fields.items():
        if name in file_section:
            out[name] = _coerce(kind, file_section[name])
        value = overrides.get(name)
        if value is not None:
            out[name] = value if not isinstance(value, str) else _coerce(kind, value)
    return out


def resolve_pipeline_config(
    file_values: dict[str, dict[str, str]] | None = None,
    **overrides,
) -> PipelineConfig:
    """Build a pipeline config from defaults, file values, then overrides."""
    file_values = file_values or {}
    pipeline_kwargs = _layer(
        _PIPELINE_FIELDS, file_values.get("pipeline", {}), overrides
    )
    tracker_kwargs = _layer(
        _TRACKER_FIELDS, file_values.get("tracker", {}), overrides
    )
    return PipelineConfig(
        tracker=TrackerConfig(**tracker_kwargs), **pipeline_kwargs
    )


def resolve_oracle(
    file_values: dict[str, dict[str, str]] | None = None,
    **overrides,
) -> tuple[float, OracleConfig]:
    """Oracle fidelity plus score-model parameters from the same layers."""
    file_values = file_values or {}
    kwargs = _layer(_ORACLE_FIELDS, file_values.get("oracle", {}), overrides)
    fidelity = kwargs.pop("fidelity", 0.9)
    return fidelity, OracleConfig(**kwargs)


def config_snapshot(cfg: PipelineConfig) -> dict:
    """Flatten a config into JSON-ready primitives for the run manifest."""

    def plain(value):
        if dataclasses.is_dataclass(value):
            return {
                f.name: plain(getattr(value, f.name))
                for f in dataclasses.fields(value)
            }
        if isinstance(value, (PaddingStrategy, PerturbationSchedule, Variant)):
            return value.value
        return value

    return plain(cfg)
