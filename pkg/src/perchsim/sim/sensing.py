"""Simulated camera frame: visibility, noisy corners and per-marker PnP."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from perchsim.geometry import (
    NonConvergence,
    RelPose,
    detectable,
    project_points,
    solve_pnp,
)
from perchsim.sim.config import ScenarioConfig
from perchsim.sim.dynamics import DroneState


@dataclass(frozen=True, slots=True)
class DetectionSet:
    true_pose: RelPose
    corners: dict[int, np.ndarray] = field(default_factory=dict)
    poses: dict[int, RelPose] = field(default_factory=dict)
    burst: bool = False

    def detected(self, marker_id: int) -> bool:
        return marker_id in self.poses


def relative_pose(cfg: ScenarioConfig, drone: DroneState) -> RelPose:
    """True target pose in the upward-looking camera frame."""
    tx, ty, tz = cfg.target_position
    x, y, z = drone.position
    c, s = math.cos(math.radians(drone.yaw)), math.sin(math.radians(drone.yaw))
    dx, dy = tx - x, ty - y
    return RelPose(c * dx + s * dy, -s * dx + c * dy, tz - z, cfg.target_yaw - drone.yaw)


def sense(
    cfg: ScenarioConfig,
    drone: DroneState,
    rng: np.random.Generator,
    *,
    burst: bool = False,
    guesses: dict[int, RelPose] | None = None,
) -> DetectionSet:
    """One camera frame.

    Draw order per call is fixed regardless of outcome: for each marker in id
    order, one uniform (dropout) then eight normals (corner noise). Keeping the
    count constant keeps the random stream aligned across code paths.
    """
    truth = relative_pose(cfg, drone)
    markers = cfg.target.markers()
    draws: dict[int, float] = {}
    noise: dict[int, np.ndarray] = {}
    for m in markers:
        draws[m.marker_id] = float(rng.random())
        noise[m.marker_id] = rng.standard_normal((4, 2)) * cfg.noise.pixel_sigma
    if burst or truth.z <= 0:
        return DetectionSet(truth, burst=burst)

    visible = detectable(truth, cfg.intrinsics, cfg.target, cfg.thresholds, draws, cfg.noise.dropout_p)
    corners: dict[int, np.ndarray] = {}
    poses: dict[int, RelPose] = {}
    for m in markers:
        if m.marker_id not in visible:
            continue
        c = project_points(cfg.intrinsics, truth, m) + noise[m.marker_id]
        corners[m.marker_id] = c
        guess = (guesses or {}).get(m.marker_id)
        try:
            try:
                poses[m.marker_id] = solve_pnp(cfg.intrinsics, m, c, guess)
            except NonConvergence:
                if guess is None:
                    raise
                poses[m.marker_id] = solve_pnp(cfg.intrinsics, m, c, None)
        except NonConvergence:
            pass  # counts as a missed detection
    return DetectionSet(truth, corners, poses)


def drone_for_relative(cfg: ScenarioConfig, rel: RelPose) -> DroneState:
    """Drone state that sees the target at relative pose ``rel`` (inverse of :func:`relative_pose`)."""
    yaw = cfg.target_yaw - rel.yaw
    c, s = math.cos(math.radians(yaw)), math.sin(math.radians(yaw))
    tx, ty, tz = cfg.target_position
    return DroneState((tx - (c * rel.x - s * rel.y), ty - (s * rel.x + c * rel.y), tz - rel.z), yaw)
