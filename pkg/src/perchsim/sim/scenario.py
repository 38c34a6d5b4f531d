"""Closed-loop scenario runner and an open-loop estimation runner."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from perchsim import kalman
from perchsim.fusion import FusedPose, classify_stage, merge
from perchsim.geometry import RelPose
from perchsim.planner import Mode, Phase, PlannerInput, PlannerState, is_terminal, planner_step
from perchsim.sim.config import ScenarioConfig
from perchsim.sim.dynamics import DroneState, step_dynamics
from perchsim.sim.sensing import DetectionSet, sense
from perchsim.sim.trace import TraceRecord


class RunResult(enum.Enum):
    PERCHED = "Perched"
    SAFETY_LANDED = "SafetyLanded"
    TIMEOUT = "Timeout"


EXIT_CODES = {RunResult.PERCHED: 0, RunResult.SAFETY_LANDED: 2, RunResult.TIMEOUT: 3}


@dataclass(frozen=True, slots=True)
class RunOutcome:
    result: RunResult
    final_lateral_error_cm: float | None
    ticks_elapsed: int
    perch_attempts_used: int


class PoseEstimator:
    """Per-marker Kalman filters followed by stage-based merging."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.m1_id = cfg.target.large.marker_id
        self.m2_id = cfg.target.small.marker_id
        self.filters: dict[int, kalman.KfState | None] = {self.m1_id: None, self.m2_id: None}

    def guesses(self) -> dict[int, RelPose]:
        """Filtered poses usable as PnP seeds."""
        out = {}
        for mid, st in self.filters.items():
            if st is not None and st.valid and st.x_hat[6] > 0:
                out[mid] = st.pose()
        return out

    def filtered(self, marker_id: int) -> RelPose | None:
        st = self.filters[marker_id]
        return st.pose() if st is not None and st.valid else None

    def update(self, det: DetectionSet) -> FusedPose | None:
        for mid in self.filters:
            raw = det.poses.get(mid)
            z = None if raw is None else kalman.measurement_from_pose(raw)
            self.filters[mid] = kalman.step(self.filters[mid], z, self.cfg.kf)
        p1, p2 = self.filtered(self.m1_id), self.filtered(self.m2_id)
        stage = classify_stage(p1 is not None, p2 is not None)
        if stage is None:
            return None
        fresh = (p1 is not None and det.detected(self.m1_id)) or (p2 is not None and det.detected(self.m2_id))
        return merge(stage, p1, p2, self.cfg.weights, fresh=fresh)


class _Burst:
    """Loss-burst process; draws one uniform per tick before sensing."""

    def __init__(self, p: float, ticks: int):
        self.p, self.ticks, self.remaining = p, ticks, 0

    def tick(self, rng: np.random.Generator) -> bool:
        u = rng.random()
        if self.remaining == 0 and u < self.p:
            self.remaining = self.ticks
        if self.remaining > 0:
            self.remaining -= 1
            return True
        return False


def _record(
    tick: int,
    det: DetectionSet,
    est: PoseEstimator,
    fused: FusedPose | None,
    phase: Phase | None,
    sp,
    attached: bool,
    drone: DroneState,
) -> TraceRecord:
    return TraceRecord(
        tick=tick,
        true_pose=det.true_pose,
        m1_detected=det.detected(est.m1_id),
        m2_detected=det.detected(est.m2_id),
        m1_raw=det.poses.get(est.m1_id),
        m2_raw=det.poses.get(est.m2_id),
        m1_filtered=est.filtered(est.m1_id),
        m2_filtered=est.filtered(est.m2_id),
        stage=None if fused is None else fused.stage,
        fused=fused,
        phase=phase,
        setpoint=sp,
        attached=attached,
        drone=drone,
    )


def lateral_offset(cfg: ScenarioConfig, drone: DroneState) -> float:
    tx, ty, _ = cfg.target_position
    return math.hypot(drone.position[0] - tx, drone.position[1] - ty)


def run_scenario(cfg: ScenarioConfig) -> tuple[RunOutcome, list[TraceRecord]]:
    """Run one closed-loop perching attempt until a terminal phase or ``max_ticks``.

    Per tick: sense, filter and merge, plan, fly, then resolve surface contact
    and magnet attachment. All randomness comes from one generator seeded with
    ``cfg.seed``; each tick draws the burst uniform first, then the sensing draws.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    burst = _Burst(cfg.noise.burst_p, cfg.noise.burst_ticks)
    est = PoseEstimator(cfg)
    drone = DroneState(cfg.start_position, cfg.start_yaw)
    plan = PlannerState()
    attached = False
    attach_error: float | None = None
    surface_z = cfg.target_position[2]
    dt = cfg.dt
    trace: list[TraceRecord] = []

    for tick in range(cfg.max_ticks):
        det = sense(cfg, drone, rng, burst=burst.tick(rng), guesses=est.guesses())
        fused = est.update(det)
        inp = PlannerInput(fused, attached, (tick + 1) * dt, drone.position, drone.yaw)
        plan, sp = planner_step(plan, inp, cfg.planner)
        drone = step_dynamics(drone, sp, cfg.controller, dt, attached=attached)
        x, y, z = drone.position
        if z > surface_z:
            drone = DroneState((x, y, surface_z), drone.yaw, (drone.velocity[0], drone.velocity[1], 0.0), drone.yaw_rate)
        if (
            not attached
            and not cfg.force_attach_fail
            and sp.mode is Mode.THROTTLE_BURST
            and surface_z - drone.position[2] <= cfg.attach_gap_cm
            and lateral_offset(cfg, drone) <= cfg.target.magnet_radius_cm
        ):
            attached = True
            attach_error = lateral_offset(cfg, drone)
        trace.append(_record(tick, det, est, fused, plan.phase, sp, attached, drone))
        if is_terminal(plan):
            break

    if plan.phase is Phase.PERCHED:
        result = RunResult.PERCHED
    elif plan.phase is Phase.LANDED:
        result = RunResult.SAFETY_LANDED
    else:
        result = RunResult.TIMEOUT
        attach_error = None
    return RunOutcome(result, attach_error if result is RunResult.PERCHED else None, len(trace), plan.perch_attempts), trace


def run_estimation(
    cfg: ScenarioConfig,
    drone_states: Sequence[DroneState] | Iterable[DroneState],
    *,
    missing_ticks: Iterable[int] = (),
) -> list[TraceRecord]:
    """Open-loop estimation along a prescribed drone trajectory.

    No planner or dynamics: each tick senses from the given drone state and
    runs the filters and merge. Ticks in ``missing_ticks`` are forced to have
    no detections (the random draws still happen, so the stream is unchanged).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    burst = _Burst(cfg.noise.burst_p, cfg.noise.burst_ticks)
    missing = set(missing_ticks)
    est = PoseEstimator(cfg)
    trace: list[TraceRecord] = []
    for tick, drone in enumerate(drone_states):
        forced = burst.tick(rng)
        det = sense(cfg, drone, rng, burst=forced or tick in missing, guesses=est.guesses())
        fused = est.update(det)
        trace.append(_record(tick, det, est, fused, None, None, False, drone))
    return trace
