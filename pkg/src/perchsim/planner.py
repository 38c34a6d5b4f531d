"""Seven-phase perching state machine.

Phases 1-7 map onto ``Approach, Search, EstimatePose, Align, Ascend, Execute,
Complete``; ``SafetyLand`` is the transient landing command and ``Landed``,
``Perched`` and ``Failed`` are absorbing.

The planner is a pure function of ``(state, input, config)``. Setpoints are
world-frame positions (cm) and headings (deg); lateral corrections are formed
from the fused relative pose rotated by the vehicle's own heading.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from perchsim.angles import wrap_deg
from perchsim.fusion import FusedPose


class Phase(enum.Enum):
    APPROACH = "Approach"
    SEARCH = "Search"
    ESTIMATE_POSE = "EstimatePose"
    ALIGN = "Align"
    ASCEND = "Ascend"
    EXECUTE = "Execute"
    COMPLETE = "Complete"
    SAFETY_LAND = "SafetyLand"
    LANDED = "Landed"
    PERCHED = "Perched"
    FAILED = "Failed"


TERMINAL = frozenset({Phase.PERCHED, Phase.LANDED, Phase.FAILED})


class Mode(enum.Enum):
    POSITION = "Position"
    THROTTLE_BURST = "ThrottleBurst"
    MOTORS_OFF = "MotorsOff"
    LAND = "Land"


@dataclass(frozen=True, slots=True)
class Setpoint:
    x_d: float
    y_d: float
    z_d: float
    psi_d: float
    mode: Mode = Mode.POSITION


@dataclass(frozen=True, slots=True)
class PlannerConfig:
    align_tol_xy: float = 2.0
    align_tol_yaw: float = 5.0
    ascend_step: float = 0.5  # cm per tick of setpoint ramp
    close_z: float = 6.0
    ascend_standoff: float = 4.0  # never ramp closer than this to the estimated surface
    search_climb_step: float = 10.0
    max_search_attempts: int = 20
    max_perch_attempts: int = 3
    perch_timeout: float = 120.0
    retreat_dz: float = 10.0
    execute_window: float = 0.5
    settle_tol: float = 0.25  # altitude tolerance before retrying after a retreat
    approach_tol: float = 3.0
    ceiling_z: float = -2.0  # world z; the target surface sits at 0 by default
    floor_z: float = -250.0
    approach_waypoint: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        positive = (
            "align_tol_xy align_tol_yaw ascend_step close_z ascend_standoff search_climb_step "
            "perch_timeout retreat_dz execute_window settle_tol approach_tol"
        ).split()
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_search_attempts < 1 or self.max_perch_attempts < 1:
            raise ValueError("attempt limits must be >= 1")
        if self.retreat_dz != 10.0:
            raise ValueError("retreat_dz is fixed at 10 cm")
        if self.floor_z >= self.ceiling_z:
            raise ValueError("floor_z must lie below ceiling_z")
        if self.ascend_standoff >= self.close_z:
            raise ValueError("ascend_standoff must be below close_z or Execute is unreachable")


@dataclass(frozen=True, slots=True)
class PlannerInput:
    fused: FusedPose | None
    attached: bool
    tick_time: float
    position: tuple[float, float, float]
    yaw: float


@dataclass(frozen=True, slots=True)
class PlannerState:
    phase: Phase = Phase.APPROACH
    search_attempts: int = 0
    perch_attempts: int = 0
    start_time: float | None = None
    burst_start: float | None = None
    hold: tuple[float, float, float, float] | None = None  # x, y, z, yaw
    z_ramp: float = 0.0
    retreating: bool = False
    last_time: float | None = None


def is_terminal(state: PlannerState) -> bool:
    return state.phase in TERMINAL


def _clamp_z(z: float, cfg: PlannerConfig) -> float:
    return min(cfg.ceiling_z, max(cfg.floor_z, z))


def _position(x: float, y: float, z: float, psi: float, cfg: PlannerConfig) -> Setpoint:
    return Setpoint(x, y, _clamp_z(z, cfg), wrap_deg(psi))


def _hold_here(inp: PlannerInput) -> tuple[float, float, float, float]:
    x, y, z = inp.position
    return (x, y, z, inp.yaw)


def _target_in_world(inp: PlannerInput, f: FusedPose) -> tuple[float, float, float]:
    """World x, y of the target center and the heading that zeroes relative yaw."""
    c, s = math.cos(math.radians(inp.yaw)), math.sin(math.radians(inp.yaw))
    x, y, _ = inp.position
    return (x + c * f.e_x - s * f.e_y, y + s * f.e_x + c * f.e_y, inp.yaw + f.e_psi)


def _aligned(f: FusedPose, cfg: PlannerConfig) -> bool:
    return abs(f.e_x) <= cfg.align_tol_xy and abs(f.e_y) <= cfg.align_tol_xy and abs(f.e_psi) <= cfg.align_tol_yaw


def _land(state: PlannerState, inp: PlannerInput) -> tuple[PlannerState, Setpoint]:
    x, y, z = inp.position
    return replace(state, phase=Phase.SAFETY_LAND), Setpoint(x, y, z, inp.yaw, Mode.LAND)


def planner_step(state: PlannerState, inp: PlannerInput, cfg: PlannerConfig) -> tuple[PlannerState, Setpoint]:
    """Advance the state machine by one tick and return the setpoint to fly."""
    x, y, z = inp.position
    if state.last_time is not None and inp.tick_time <= state.last_time:
        raise ValueError("tick_time must be strictly increasing")

    if is_terminal(state):
        mode = Mode.MOTORS_OFF if state.phase is Phase.PERCHED else Mode.LAND
        return replace(state, last_time=inp.tick_time), Setpoint(x, y, z, inp.yaw, mode)

    if state.start_time is None:
        state = replace(state, start_time=inp.tick_time, hold=_hold_here(inp))
    state = replace(state, last_time=inp.tick_time)
    hx, hy, hz, hpsi = state.hold  # type: ignore[misc]
    f = inp.fused
    phase = state.phase

    if phase is Phase.COMPLETE:
        return replace(state, phase=Phase.PERCHED), Setpoint(x, y, z, inp.yaw, Mode.MOTORS_OFF)
    if phase is Phase.SAFETY_LAND:
        return replace(state, phase=Phase.LANDED), Setpoint(x, y, z, inp.yaw, Mode.LAND)
    if inp.tick_time - state.start_time >= cfg.perch_timeout:  # type: ignore[operator]
        return _land(state, inp)

    if phase is Phase.APPROACH:
        wp = cfg.approach_waypoint
        if wp is None or math.dist(wp, inp.position) <= cfg.approach_tol:
            hold = _hold_here(inp) if wp is None else (*wp, inp.yaw)
            return replace(state, phase=Phase.SEARCH, hold=hold), _position(*hold, cfg)
        return state, _position(wp[0], wp[1], wp[2], hpsi, cfg)

    if phase is Phase.SEARCH:
        if f is not None and f.fresh:
            return replace(state, phase=Phase.ESTIMATE_POSE), _position(hx, hy, hz, hpsi, cfg)
        attempts = state.search_attempts + 1
        if attempts >= cfg.max_search_attempts:
            return _land(replace(state, search_attempts=attempts), inp)
        hold = (hx, hy, _clamp_z(hz + cfg.search_climb_step, cfg), hpsi)
        return replace(state, search_attempts=attempts, hold=hold), _position(*hold, cfg)

    if phase is Phase.EXECUTE:
        if inp.attached:
            return replace(state, phase=Phase.COMPLETE), Setpoint(x, y, z, inp.yaw, Mode.MOTORS_OFF)
        if inp.tick_time - state.burst_start >= cfg.execute_window:  # type: ignore[operator]
            if state.perch_attempts < cfg.max_perch_attempts:
                hold = (x, y, _clamp_z(z - cfg.retreat_dz, cfg), inp.yaw)
                st = replace(state, phase=Phase.ESTIMATE_POSE, hold=hold, retreating=True)
                return st, _position(*hold, cfg)
            return _land(state, inp)
        return state, Setpoint(x, y, z, inp.yaw, Mode.THROTTLE_BURST)

    if f is None and state.retreating:
        # filters went stale during the burst; finish the descent first
        return state, _position(hx, hy, hz, hpsi, cfg)

    if f is None:
        # target lost: hold the current position and look again
        hold = _hold_here(inp)
        return replace(state, phase=Phase.SEARCH, hold=hold, retreating=False), _position(*hold, cfg)

    if phase is Phase.ESTIMATE_POSE:
        settled = not state.retreating or abs(z - hz) <= cfg.settle_tol
        if f.fresh and settled:
            return replace(state, phase=Phase.ALIGN, retreating=False), _position(hx, hy, hz, hpsi, cfg)
        return state, _position(hx, hy, hz, hpsi, cfg)

    tx, ty, tpsi = _target_in_world(inp, f)

    if phase is Phase.ALIGN:
        sp = _position(tx, ty, hz, tpsi, cfg)
        if f.fresh and _aligned(f, cfg):
            return replace(state, phase=Phase.ASCEND, z_ramp=z), sp
        return state, sp

    if phase is Phase.ASCEND:
        if not _aligned(f, cfg):
            hold = (x, y, z, inp.yaw)
            return replace(state, phase=Phase.ALIGN, hold=hold), _position(tx, ty, z, tpsi, cfg)
        if f.fresh and f.e_z <= cfg.close_z:
            st = replace(state, phase=Phase.EXECUTE, burst_start=inp.tick_time, perch_attempts=state.perch_attempts + 1)
            return st, Setpoint(x, y, z, inp.yaw, Mode.THROTTLE_BURST)
        ramp = state.z_ramp + cfg.ascend_step
        z_d = min(ramp, z + f.e_z - cfg.ascend_standoff)
        return replace(state, z_ramp=ramp), _position(tx, ty, z_d, tpsi, cfg)

    raise AssertionError(f"unhandled phase {phase}")
