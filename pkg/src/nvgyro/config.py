"""Experiment configuration: schema, YAML round-trip, dotted overrides.

A full experiment is described by one mapping with the sections

    sensor:      SensorParams fields
    trajectory:  seed-independent field components + grid spacing
    noise:       NoiseModel fields
    sequence:    SequenceConfig fields
    control:     ControlConfig fields, or enabled: false
    run:         duration, seed, label
    analysis:    tau grid, feature periods, white-fit window, scale factor

Any subset may be given; missing fields take the documented defaults.
``--set a.b.c=value`` style overrides are applied onto the mapping
before validation, with values parsed as YAML scalars.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .control import ControlConfig
from .environment import (Constant, FieldComponent, FieldTrajectory,
                          NoiseModel, OrnsteinUhlenbeck, RandomWalk, Sinusoid)
from .protocol import SequenceConfig
from .spinmodel import SensorParams


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


_COMPONENT_TYPES = {
    "sinusoid": Sinusoid,
    "random_walk": RandomWalk,
    "ornstein_uhlenbeck": OrnsteinUhlenbeck,
    "constant": Constant,
}


@dataclass(frozen=True)
class RunSettings:
    duration: float = 1e5
    seed: int = 1
    label: str = "run"
    oob_threshold_rel: float = 1e-3   # capture-range fraction of nominal slope

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("run.duration must be > 0")
        if self.oob_threshold_rel < 0:
            raise ValueError("run.oob_threshold_rel must be >= 0")


@dataclass(frozen=True)
class AnalysisSettings:
    taus: tuple | None = None            # explicit grid, or None for auto
    feature_periods: tuple = ()          # periods to scan for signatures, s
    white_fit_window: tuple | None = None  # (lo, hi) tau window, s
    scale_s: float | None = None         # (deg/s)^-1 rotation-axis factor
    column: str = "F"


@dataclass(frozen=True)
class ExperimentConfig:
    sensor: SensorParams = field(default_factory=SensorParams)
    components: tuple[FieldComponent, ...] = ()
    trajectory_grid: float = 1.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    sequence: SequenceConfig = field(default_factory=SequenceConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    run: RunSettings = field(default_factory=RunSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)

    def make_trajectory(self, seed: int | None = None) -> FieldTrajectory:
        return FieldTrajectory(self.components,
                               seed=self.run.seed if seed is None else seed,
                               grid=self.trajectory_grid)


def _build(cls, section: dict, path: str):
    """Instantiate a dataclass from a mapping with precise error keys."""
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}; "
                          f"expected a subset of {sorted(known)}")
    coerced = {}
    for f in dataclasses.fields(cls):
        if f.name not in section:
            continue
        value = section[f.name]
        if isinstance(value, list):
            value = tuple(value)
        coerced[f.name] = value
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _component_from_dict(entry: dict, path: str) -> FieldComponent:
    if not isinstance(entry, dict) or "type" not in entry:
        raise ConfigError(f"{path}: each component needs a 'type' key")
    kind = entry["type"]
    if kind not in _COMPONENT_TYPES:
        raise ConfigError(f"{path}: unknown component type {kind!r}; "
                          f"choose from {sorted(_COMPONENT_TYPES)}")
    fields = {k: v for k, v in entry.items() if k != "type"}
    return _build(_COMPONENT_TYPES[kind], fields, path)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    known = {"sensor", "trajectory", "noise", "sequence", "control", "run",
             "analysis", "variants", "type", "calibration", "predictor_study"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level section(s) {sorted(unknown)}")

    trajectory = raw.get("trajectory", {}) or {}
    components = tuple(
        _component_from_dict(c, f"trajectory.components[{i}]")
        for i, c in enumerate(trajectory.get("components", [])))

    control_raw = dict(raw.get("control", {}) or {})
    return ExperimentConfig(
        sensor=_build(SensorParams, raw.get("sensor", {}) or {}, "sensor"),
        components=components,
        trajectory_grid=float(trajectory.get("grid", 1.0)),
        noise=_build(NoiseModel, raw.get("noise", {}) or {}, "noise"),
        sequence=_build(SequenceConfig, raw.get("sequence", {}) or {},
                        "sequence"),
        control=_build(ControlConfig, control_raw, "control"),
        run=_build(RunSettings, raw.get("run", {}) or {}, "run"),
        analysis=_build(AnalysisSettings, raw.get("analysis", {}) or {},
                        "analysis"),
    )


def _plain(value):
    """Recursively convert to YAML/JSON-friendly builtin types."""
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, (tuple, list)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {k: _plain(v) for k, v in dataclasses.asdict(value).items()}
    return value


def config_to_dict(config: ExperimentConfig) -> dict:
    components = []
    for comp in config.components:
        entry = {"type": next(k for k, v in _COMPONENT_TYPES.items()
                              if isinstance(comp, v))}
        entry.update(_plain(comp))
        components.append(entry)
    return {
        "sensor": _plain(config.sensor),
        "trajectory": {"components": components,
                       "grid": config.trajectory_grid},
        "noise": _plain(config.noise),
        "sequence": _plain(config.sequence),
        "control": _plain(config.control),
        "run": _plain(config.run),
        "analysis": _plain(config.analysis),
    }


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.path=value`` overrides; values parse as YAML scalars."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like key.path=value")
        key, _, text = item.partition("=")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {key}: unparseable value {text!r}: "
                              f"{exc}") from exc
        node = raw
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key}: {part} is not a mapping")
        node[parts[-1]] = value
    return raw


def load_raw(path: str | Path) -> dict:
    """Raw config mapping from a YAML file or a run manifest JSON/YAML.

    A manifest (output of a previous run) embeds the config under the
    'config' key; loading it reproduces the original run.
    """
    path = Path(path)
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: YAML parse error: {exc}") from exc
    if isinstance(raw, dict) and "config" in raw and "artifact" in raw:
        return raw["config"]
    return raw if raw is not None else {}


def load_config(path: str | Path, overrides: list[str] | None = None
                ) -> ExperimentConfig:
    raw = load_raw(path)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return config_from_dict(raw)


def dump_config(config: ExperimentConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config_to_dict(config), fh, sort_keys=False)
