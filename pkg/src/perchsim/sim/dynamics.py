"""Point-mass stand-in for the onboard cascade controllers."""

from __future__ import annotations

import math
from dataclasses import dataclass

from perchsim.angles import angle_diff_deg, wrap_deg
from perchsim.planner import Mode, Setpoint
from perchsim.sim.config import ControllerModel

GRAVITY_CM_S2 = 981.0


@dataclass(frozen=True, slots=True)
class DroneState:
    position: tuple[float, float, float]
    yaw: float
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    yaw_rate: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", wrap_deg(self.yaw))


def _approach(err: float, tau: float, dt: float) -> float:
    """Exact one-step displacement of a first-order lag toward ``err``."""
    return err * -math.expm1(-dt / tau)


def step_dynamics(
    d: DroneState, sp: Setpoint, cm: ControllerModel, dt: float, *, attached: bool = False
) -> DroneState:
    """Advance the vehicle one tick toward ``sp``.

    Position mode is a saturated first-order lag per axis group: horizontal
    displacement is capped at ``v_max_xy * dt`` (vector norm), vertical at
    ``v_max_z * dt`` and heading at ``yaw_rate_max * dt``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    x, y, z = d.position

    if sp.mode is Mode.THROTTLE_BURST:
        vz = cm.v_max_z
        return DroneState((x, y, z + vz * dt), d.yaw, (0.0, 0.0, vz), 0.0)

    if sp.mode is Mode.MOTORS_OFF:
        if attached:
            return DroneState(d.position, d.yaw)
        vx, vy, vz = d.velocity
        vz -= GRAVITY_CM_S2 * dt
        return DroneState((x + vx * dt, y + vy * dt, z + vz * dt), d.yaw, (vx, vy, vz), 0.0)

    if sp.mode is Mode.LAND:
        vz = -0.5 * cm.v_max_z
        return DroneState((x, y, z + vz * dt), d.yaw, (0.0, 0.0, vz), 0.0)

    dx = _approach(sp.x_d - x, cm.tau_xy, dt)
    dy = _approach(sp.y_d - y, cm.tau_xy, dt)
    lim = cm.v_max_xy * dt
    norm = math.hypot(dx, dy)
    if norm > lim:
        dx, dy = dx * lim / norm, dy * lim / norm
    dz = _approach(sp.z_d - z, cm.tau_z, dt)
    dz = max(-cm.v_max_z * dt, min(cm.v_max_z * dt, dz))
    dpsi = _approach(angle_diff_deg(sp.psi_d, d.yaw), cm.tau_yaw, dt)
    dpsi = max(-cm.yaw_rate_max * dt, min(cm.yaw_rate_max * dt, dpsi))
    return DroneState(
        (x + dx, y + dy, z + dz),
        d.yaw + dpsi,
        (dx / dt, dy / dt, dz / dt),
        dpsi / dt,
    )
