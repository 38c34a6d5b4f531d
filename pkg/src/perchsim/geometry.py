"""Perching-target geometry, simulated pinhole camera and 4-DOF PnP.

Frames and conventions:

- The camera looks straight up along +z. A target pose is expressed in the
  camera frame as ``RelPose(x, y, z, yaw)`` with translations in cm and yaw in
  degrees about the optical axis.
- Pixel coordinates: ``u = cx + fx * X / Z`` and ``v = cy + fy * Y / Z``.
- Corner order in the marker frame is TL, TR, BR, BL:
  ``(-h, -h), (h, -h), (h, h), (-h, h)`` with ``h`` the half side in cm.

The target plane is assumed parallel to the image plane (horizontal overhead
surface), so only x, y, z and yaw are recovered.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from perchsim.angles import wrap_deg

CornerSet = np.ndarray  # (4, 2) pixel coordinates, TL/TR/BR/BL


class MarkerDict(str, enum.Enum):
    DICT_4X4_100 = "Dict4x4_100"
    ARUCO_ORIGINAL = "DictArucoOriginal"


class NonConvergence(RuntimeError):
    """PnP could not explain the corners; treat the frame as a missed detection."""


@dataclass(frozen=True, slots=True)
class MarkerSpec:
    """Square fiducial marker. ``marker_id`` is opaque metadata."""

    marker_id: int
    dict_tag: MarkerDict
    side_mm: float
    center_offset_mm: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.side_mm) and self.side_mm > 0):
            raise ValueError(f"side_mm must be positive, got {self.side_mm}")

    @property
    def side_cm(self) -> float:
        return self.side_mm / 10.0


def _default_large() -> MarkerSpec:
    return MarkerSpec(997, MarkerDict.DICT_4X4_100, 150.0)


def _default_small() -> MarkerSpec:
    return MarkerSpec(5, MarkerDict.ARUCO_ORIGINAL, 25.0)


@dataclass(frozen=True, slots=True)
class PerchingTarget:
    """A small marker nested at the center of a large one, plus the magnet."""

    large: MarkerSpec = field(default_factory=_default_large)
    small: MarkerSpec = field(default_factory=_default_small)
    magnet_radius_cm: float = 2.5

    def __post_init__(self) -> None:
        if self.small.side_mm >= self.large.side_mm:
            raise ValueError("small marker must be smaller than the large marker")
        if self.large.center_offset_mm != (0.0, 0.0) or self.small.center_offset_mm != (0.0, 0.0):
            raise ValueError("markers must be co-centered")
        if self.large.marker_id == self.small.marker_id:
            raise ValueError("marker ids must differ")
        if self.magnet_radius_cm <= 0:
            raise ValueError("magnet_radius_cm must be positive")

    def markers(self) -> tuple[MarkerSpec, MarkerSpec]:
        """Both markers sorted by id (the sensing draw order)."""
        return tuple(sorted((self.large, self.small), key=lambda m: m.marker_id))  # type: ignore[return-value]


@dataclass(frozen=True, slots=True)
class CameraIntrinsics:
    fx: float = 460.0
    fy: float = 460.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_hfov(cls, hfov_deg: float, width: int = 640, height: int = 480) -> CameraIntrinsics:
        """Square-pixel camera with the principal point at the image center."""
        f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
        return cls(f, f, width / 2.0, height / 2.0, width, height)


@dataclass(frozen=True, slots=True)
class RelPose:
    """Target pose in the camera frame: cm and degrees, yaw in (-180, 180]."""

    x: float
    y: float
    z: float
    yaw: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", wrap_deg(self.yaw))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.yaw])

    @classmethod
    def from_array(cls, a) -> RelPose:
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))


@dataclass(frozen=True, slots=True)
class VisibilityThresholds:
    """Empirical detection range gates in cm.

    z1: max range of the large marker, z2: max range of the small marker,
    z3: min range of the large marker.
    """

    z1: float = 115.0
    z2: float = 25.0
    z3: float = 12.0

    def __post_init__(self) -> None:
        if not (0 < self.z3 < self.z2 < self.z1):
            raise ValueError(f"thresholds must satisfy 0 < z3 < z2 < z1, got {self}")


def marker_corners_3d(spec: MarkerSpec) -> np.ndarray:
    """Corners of ``spec`` in its own frame (cm), shape (4, 3), TL/TR/BR/BL."""
    h = spec.side_cm / 2.0
    ox, oy = spec.center_offset_mm[0] / 10.0, spec.center_offset_mm[1] / 10.0
    return np.array(
        [
            [ox - h, oy - h, 0.0],
            [ox + h, oy - h, 0.0],
            [ox + h, oy + h, 0.0],
            [ox - h, oy + h, 0.0],
        ]
    )


def _corners_in_camera(pose: RelPose, spec: MarkerSpec) -> np.ndarray:
    pts = marker_corners_3d(spec)
    c, s = math.cos(math.radians(pose.yaw)), math.sin(math.radians(pose.yaw))
    X = c * pts[:, 0] - s * pts[:, 1] + pose.x
    Y = s * pts[:, 0] + c * pts[:, 1] + pose.y
    Z = np.full(4, pose.z)
    return np.stack([X, Y, Z], axis=1)


def project_points(intr: CameraIntrinsics, pose: RelPose, spec: MarkerSpec) -> np.ndarray:
    """Pinhole projection of the marker corners with no image-bounds check."""
    if pose.z <= 0:
        raise ValueError("target must be in front of the camera (z > 0)")
    P = _corners_in_camera(pose, spec)
    u = intr.cx + intr.fx * P[:, 0] / P[:, 2]
    v = intr.cy + intr.fy * P[:, 1] / P[:, 2]
    return np.stack([u, v], axis=1)


def in_image(intr: CameraIntrinsics, corners: np.ndarray) -> bool:
    u, v = corners[:, 0], corners[:, 1]
    return bool(np.all((u >= 0) & (u < intr.width) & (v >= 0) & (v < intr.height)))


def project_marker(intr: CameraIntrinsics, pose: RelPose, spec: MarkerSpec) -> CornerSet | None:
    """Project the marker corners; ``None`` when the marker is not fully in view."""
    if pose.z <= 0:
        return None
    corners = project_points(intr, pose, spec)
    if not in_image(intr, corners):
        return None
    return corners


def detectable(
    pose: RelPose,
    intr: CameraIntrinsics,
    target: PerchingTarget,
    th: VisibilityThresholds,
    draws: Mapping[int, float],
    dropout_p: float,
) -> frozenset[int]:
    """Ids of the markers detected this frame.

    ``draws`` holds one uniform sample in [0, 1) per marker id; a marker is
    dropped when its draw is below ``dropout_p``. Range gates are inclusive.
    """
    if not 0.0 <= dropout_p < 1.0:
        raise ValueError("dropout_p must be in [0, 1)")
    seen = set()
    z = pose.z
    large, small = target.large, target.small
    if (
        th.z3 <= z <= th.z1
        and project_marker(intr, pose, large) is not None
        and draws[large.marker_id] >= dropout_p
    ):
        seen.add(large.marker_id)
    if (
        0 < z <= th.z2
        and project_marker(intr, pose, small) is not None
        and draws[small.marker_id] >= dropout_p
    ):
        seen.add(small.marker_id)
    return frozenset(seen)


def initial_guess_from_corners(intr: CameraIntrinsics, spec: MarkerSpec, corners: np.ndarray) -> RelPose:
    """Rough pose from apparent scale and centroid; seeds the solver on first detection."""
    n = np.column_stack([(corners[:, 0] - intr.cx) / intr.fx, (corners[:, 1] - intr.cy) / intr.fy])
    edges = np.linalg.norm(np.roll(n, -1, axis=0) - n, axis=1)
    z = spec.side_cm / float(np.mean(edges))
    centroid = n.mean(axis=0)
    top = (n[1] - n[0]) + (n[2] - n[3])
    yaw = math.degrees(math.atan2(top[1], top[0]))
    return RelPose(float(centroid[0] * z), float(centroid[1] * z), z, yaw)


def reprojection_residuals(
    intr: CameraIntrinsics, spec: MarkerSpec, corners: np.ndarray, params: np.ndarray
) -> np.ndarray:
    """Predicted minus observed pixels (length 8) at ``params = (x, y, z, yaw_rad)``."""
    x, y, z, th = params
    pts = marker_corners_3d(spec)
    c, s = math.cos(th), math.sin(th)
    X = c * pts[:, 0] - s * pts[:, 1] + x
    Y = s * pts[:, 0] + c * pts[:, 1] + y
    r = np.empty(8)
    r[0::2] = intr.cx + intr.fx * X / z - corners[:, 0]
    r[1::2] = intr.cy + intr.fy * Y / z - corners[:, 1]
    return r


def solve_pnp(
    intr: CameraIntrinsics,
    spec: MarkerSpec,
    corners: np.ndarray,
    initial_guess: RelPose | None = None,
    *,
    max_iter: int = 50,
    step_tol: float = 1e-9,
    max_rms_px: float = 5.0,
) -> RelPose:
    """Gauss-Newton fit of (x, y, z, yaw) minimizing squared corner reprojection error.

    Raises:
        NonConvergence: the iteration diverged, left the valid half-space, or
            the final RMS reprojection error exceeds ``max_rms_px``.
    """
    corners = np.asarray(corners, dtype=float).reshape(4, 2)
    if initial_guess is None:
        initial_guess = initial_guess_from_corners(intr, spec, corners)
    if initial_guess.z <= 0:
        raise ValueError("initial guess must have z > 0")

    pts = marker_corners_3d(spec)
    px, py = pts[:, 0], pts[:, 1]
    fx, fy = intr.fx, intr.fy
    p = np.array([initial_guess.x, initial_guess.y, initial_guess.z, math.radians(initial_guess.yaw)])
    J = np.zeros((8, 4))
    r = np.empty(8)
    for _ in range(max_iter):
        x, y, z, th = p
        c, s = math.cos(th), math.sin(th)
        Xm = c * px - s * py
        Ym = s * px + c * py
        X = Xm + x
        Y = Ym + y
        r[0::2] = intr.cx + fx * X / z - corners[:, 0]
        r[1::2] = intr.cy + fy * Y / z - corners[:, 1]
        J[0::2, 0] = fx / z
        J[0::2, 2] = -fx * X / (z * z)
        J[0::2, 3] = -fx * Ym / z
        J[1::2, 1] = fy / z
        J[1::2, 2] = -fy * Y / (z * z)
        J[1::2, 3] = fy * Xm / z
        try:
            delta = np.linalg.solve(J.T @ J, -(J.T @ r))
        except np.linalg.LinAlgError as exc:
            raise NonConvergence("singular normal equations") from exc
        # keep z positive: halve the step until it is
        while p[2] + delta[2] <= 0:
            delta *= 0.5
            if np.linalg.norm(delta) < step_tol:
                raise NonConvergence("iteration pinned at z = 0")
        p = p + delta
        if not np.all(np.isfinite(p)):
            raise NonConvergence("non-finite iterate")
        if np.linalg.norm(delta) < step_tol:
            break

    rms = math.sqrt(float(np.mean(reprojection_residuals(intr, spec, corners, p) ** 2)))
    if not math.isfinite(rms) or rms > max_rms_px:
        raise NonConvergence(f"reprojection RMS {rms:.3g} px exceeds {max_rms_px} px")
    return RelPose(float(p[0]), float(p[1]), float(p[2]), math.degrees(p[3]))
