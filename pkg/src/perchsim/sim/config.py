"""Scenario configuration and its YAML representation."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from perchsim.fusion import WeightSet
from perchsim.geometry import CameraIntrinsics, MarkerDict, MarkerSpec, PerchingTarget, VisibilityThresholds
from perchsim.kalman import KfParams
from perchsim.planner import PlannerConfig


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class NoiseModel:
    pixel_sigma: float = 0.3
    dropout_p: float = 0.1
    burst_p: float = 0.0  # per-tick probability that a loss burst starts
    burst_ticks: int = 30

    def __post_init__(self) -> None:
        if self.pixel_sigma < 0:
            raise ValueError("pixel_sigma must be non-negative")
        for name in ("dropout_p", "burst_p"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.burst_ticks < 1:
            raise ValueError("burst_ticks must be >= 1")


@dataclass(frozen=True, slots=True)
class ControllerModel:
    tau_xy: float = 0.4
    tau_z: float = 0.3
    tau_yaw: float = 0.3
    v_max_xy: float = 30.0
    v_max_z: float = 20.0
    yaw_rate_max: float = 90.0

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")


@dataclass(frozen=True, slots=True)
class StartBox:
    """Monte Carlo start region around ``ScenarioConfig.start_position``."""

    half_x: float = 20.0
    half_y: float = 20.0
    half_z: float = 15.0
    yaw_range: float = 180.0  # start yaw uniform in [-yaw_range, yaw_range]


@dataclass(frozen=True, slots=True)
class ScenarioConfig:
    target_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    target_yaw: float = 0.0
    start_position: tuple[float, float, float] = (0.0, 0.0, -100.0)
    start_yaw: float = 30.0
    target: PerchingTarget = field(default_factory=PerchingTarget)
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    thresholds: VisibilityThresholds = field(default_factory=VisibilityThresholds)
    kf: KfParams = field(default_factory=KfParams)
    weights: WeightSet = field(default_factory=WeightSet)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    noise: NoiseModel = field(default_factory=NoiseModel)
    controller: ControllerModel = field(default_factory=ControllerModel)
    start_box: StartBox = field(default_factory=StartBox)
    tick_rate: float = 30.0
    seed: int = 42
    max_ticks: int = 6000
    attach_gap_cm: float = 0.5
    force_attach_fail: bool = False

    @property
    def dt(self) -> float:
        return 1.0 / self.tick_rate

    def validate(self) -> ScenarioConfig:
        if not (math.isfinite(self.tick_rate) and self.tick_rate > 0):
            raise InvalidConfig("tick_rate must be positive")
        if self.max_ticks < 1:
            raise InvalidConfig("max_ticks must be >= 1")
        if abs(self.kf.dt - self.dt) > 1e-9:
            raise InvalidConfig(f"kf.dt={self.kf.dt} does not match 1/tick_rate={self.dt}")
        if self.start_position[2] >= self.target_position[2]:
            raise InvalidConfig("drone must start below the target surface")
        if self.planner.ceiling_z >= self.target_position[2]:
            raise InvalidConfig("planner ceiling must lie below the target surface")
        if self.attach_gap_cm <= 0:
            raise InvalidConfig("attach_gap_cm must be positive")
        return self


_SECTIONS = {
    "intrinsics": CameraIntrinsics,
    "thresholds": VisibilityThresholds,
    "kf": KfParams,
    "weights": WeightSet,
    "planner": PlannerConfig,
    "noise": NoiseModel,
    "controller": ControllerModel,
    "start_box": StartBox,
}


def _plain(value: Any) -> Any:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def _target_to_dict(t: PerchingTarget) -> dict[str, Any]:
    return {
        "large": {"id": t.large.marker_id, "dict": t.large.dict_tag.value, "side_mm": t.large.side_mm},
        "small": {"id": t.small.marker_id, "dict": t.small.dict_tag.value, "side_mm": t.small.side_mm},
        "magnet_radius_cm": t.magnet_radius_cm,
    }


def _target_from_dict(d: dict[str, Any]) -> PerchingTarget:
    base = PerchingTarget()

    def marker(key: str, default: MarkerSpec) -> MarkerSpec:
        m = d.get(key, {})
        return MarkerSpec(
            int(m.get("id", default.marker_id)),
            MarkerDict(m.get("dict", default.dict_tag.value)),
            float(m.get("side_mm", default.side_mm)),
        )

    return PerchingTarget(
        marker("large", base.large),
        marker("small", base.small),
        float(d.get("magnet_radius_cm", base.magnet_radius_cm)),
    )


def config_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for f in dataclasses.fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "target":
            out[f.name] = _target_to_dict(value)
        elif f.name in _SECTIONS:
            out[f.name] = {k.name: _plain(getattr(value, k.name)) for k in dataclasses.fields(value)}
        else:
            out[f.name] = _plain(value)
    return out


def config_from_dict(data: dict[str, Any] | None, **overrides: Any) -> ScenarioConfig:
    """Build a validated config; missing keys take defaults."""
    data = dict(data or {})
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    try:
        tick_rate = float(data.get("tick_rate", 30.0))
        for name, value in data.items():
            if name == "target":
                kwargs[name] = _target_from_dict(value or {})
            elif name in _SECTIONS:
                section = dict(value or {})
                if name == "planner" and section.get("approach_waypoint") is not None:
                    section["approach_waypoint"] = tuple(float(v) for v in section["approach_waypoint"])
                kwargs[name] = _SECTIONS[name](**section)
            elif name in ("target_position", "start_position"):
                kwargs[name] = tuple(float(v) for v in value)
            else:
                kwargs[name] = value
        if "kf" not in kwargs:
            kwargs["kf"] = KfParams(dt=1.0 / tick_rate)
        elif "dt" not in (data.get("kf") or {}):
            kwargs["kf"] = dataclasses.replace(kwargs["kf"], dt=1.0 / tick_rate)
        cfg = ScenarioConfig(**kwargs)
    except InvalidConfig:
        raise
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc
    return cfg.validate()


def load_config(path: str | Path | None, **overrides: Any) -> ScenarioConfig:
    data = None
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh)
        if data is not None and not isinstance(data, dict):
            raise InvalidConfig("config file must contain a mapping")
    return config_from_dict(data, **overrides)


def dump_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)
