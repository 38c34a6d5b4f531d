"""Constant-velocity Kalman filter for one marker's relative pose.

State layout: ``(yaw, yaw_rate, tx, tx_rate, ty, ty_rate, tz, tz_rate)`` in
degrees, deg/s, cm and cm/s. Only the four positions are measured.

When a frame carries no measurement the filter coasts on its velocity, and
each velocity component shrinks by ``alpha`` per missed frame. After more than
``n_max`` consecutive misses the velocities are zeroed and the state is marked
invalid until the next measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from perchsim.angles import angle_diff_deg, wrap_deg
from perchsim.geometry import RelPose

POS_IDX = np.array([0, 2, 4, 6])
VEL_IDX = np.array([1, 3, 5, 7])


@dataclass(frozen=True, slots=True)
class KfParams:
    dt: float = 1.0 / 30.0
    k1: float = 0.5
    k2: float = 0.01
    alpha: float = 0.85
    n_max: int = 8

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if self.n_max < 0:
            raise ValueError("n_max must be non-negative")


@dataclass(frozen=True, slots=True)
class KfState:
    x_hat: np.ndarray  # (8,)
    P: np.ndarray  # (8, 8)
    miss_count: int = 0
    valid: bool = True

    def pose(self) -> RelPose:
        return RelPose(float(self.x_hat[2]), float(self.x_hat[4]), float(self.x_hat[6]), float(self.x_hat[0]))


def build_f(dt: float) -> np.ndarray:
    F = np.eye(8)
    F[POS_IDX, VEL_IDX] = dt
    return F


def build_h() -> np.ndarray:
    H = np.zeros((4, 8))
    H[np.arange(4), POS_IDX] = 1.0
    return H


_H = build_h()


def measurement_from_pose(pose: RelPose) -> np.ndarray:
    """Pose to the measurement vector ordering ``(yaw, x, y, z)``."""
    return np.array([pose.yaw, pose.x, pose.y, pose.z])


def init_state(z: np.ndarray, params: KfParams) -> KfState:
    """Fill positions from the first measurement; velocities start at zero."""
    x = np.zeros(8)
    x[POS_IDX] = z
    x[0] = wrap_deg(x[0])
    p0 = np.empty(8)
    p0[POS_IDX] = params.k1
    p0[VEL_IDX] = 10.0 * params.k1
    return KfState(x, np.diag(p0))


def predict(state: KfState, params: KfParams) -> KfState:
    F = build_f(params.dt)
    x = F @ state.x_hat
    x[0] = wrap_deg(x[0])
    P = F @ state.P @ F.T + params.k2 * np.eye(8)
    return replace(state, x_hat=x, P=0.5 * (P + P.T))


def update(state: KfState, z: np.ndarray, params: KfParams) -> KfState:
    """Measurement update; the yaw innovation is taken on the shortest arc."""
    H = _H
    R = params.k1 * np.eye(4)
    innov = np.asarray(z, dtype=float) - H @ state.x_hat
    innov[0] = angle_diff_deg(z[0], state.x_hat[0])
    S = H @ state.P @ H.T + R
    K = np.linalg.solve(S, H @ state.P).T
    x = state.x_hat + K @ innov
    x[0] = wrap_deg(x[0])
    IKH = np.eye(8) - K @ H
    P = IKH @ state.P @ IKH.T + K @ R @ K.T  # Joseph form
    return KfState(x, 0.5 * (P + P.T), miss_count=0, valid=True)


def step(state: KfState | None, z: np.ndarray | None, params: KfParams) -> KfState | None:
    """Advance one frame, with or without a measurement.

    ``state`` may be ``None`` before the first detection; the first
    measurement initializes the filter.
    """
    if state is None:
        return None if z is None else init_state(np.asarray(z, dtype=float), params)
    if z is not None:
        return update(predict(state, params), z, params)

    s = predict(state, params)
    x = s.x_hat.copy()
    misses = state.miss_count + 1
    if state.valid and misses <= params.n_max:
        x[VEL_IDX] *= params.alpha
        return replace(s, x_hat=x, miss_count=misses)
    x[VEL_IDX] = 0.0
    return replace(s, x_hat=x, miss_count=misses, valid=False)
