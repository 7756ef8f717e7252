"""JSON run configuration shared by every CLI command.

A config file is an object with optional sections ``generate``, ``motion``,
``noise``, ``train`` and ``metrics``; each section's keys mirror the
corresponding dataclass fields.  Unknown sections or keys are rejected.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dataset import GenerateConfig
from .signal import MotionSpec, NoiseModel, SignalError
from .training import ConfigError, TrainConfig


@dataclass
class MetricsConfig:
    clip_levels: list[float] = field(default_factory=lambda: [6.0, 15.0])
    allan_points: int = 30
    allan_axis: int = 0
    figures: bool = True


@dataclass
class RunConfig:
    generate: GenerateConfig = field(default_factory=GenerateConfig)
    motion: MotionSpec = field(default_factory=MotionSpec)
    noise: NoiseModel = field(default_factory=lambda: NoiseModel(0.05, 1e-4, 0.0, 6.0))
    train: TrainConfig = field(default_factory=TrainConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def to_dict(self) -> dict:
        d = {name: asdict(getattr(self, name)) for name in _SECTIONS}
        if math.isinf(d["noise"]["clip_level"]):
            d["noise"]["clip_level"] = "inf"
        return d


_SECTIONS = {
    "generate": GenerateConfig,
    "motion": MotionSpec,
    "noise": NoiseModel,
    "train": TrainConfig,
    "metrics": MetricsConfig,
}


def _build(section: str, cls, values: dict, base):
    if not isinstance(values, dict):
        raise ConfigError(f"section '{section}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {', '.join(unknown)}")
    merged = asdict(base)
    merged.update(values)
    if section == "noise" and merged.get("clip_level") in ("inf", "Infinity", None):
        merged["clip_level"] = math.inf
    try:
        return cls(**merged)
    except (TypeError, ValueError, SignalError) as exc:
        raise ConfigError(f"invalid '{section}' section: {exc}") from None


def parse_config(data: dict | None, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(unknown)}")
    parts = {
        name: _build(name, cls, data.get(name, {}), getattr(base, name))
        for name, cls in _SECTIONS.items()
    }
    return RunConfig(**parts)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(data)


def override(cfg: RunConfig, section: str, **values) -> RunConfig:
    """Copy of ``cfg`` with non-None ``values`` replacing keys in ``section``."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    return parse_config({section: values}, base=cfg)
