"""Stage classification, weighted merging of the two marker poses, and LMS
fitting of the merge weights."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from perchsim.angles import angle_diff_deg, wrap_deg
from perchsim.geometry import RelPose

COMPONENTS = ("x", "y", "z", "psi")


class Stage(enum.Enum):
    S1 = "S1"  # large marker only
    S2 = "S2"  # both markers
    S3 = "S3"  # small marker only


class MissingPose(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class WeightSet:
    """Per-component weight on the large-marker estimate in stage S2."""

    w_x: float = 0.275
    w_y: float = 0.306
    w_z: float = 0.728
    w_psi: float = 0.469

    def __post_init__(self) -> None:
        for name in COMPONENTS:
            w = getattr(self, f"w_{name}")
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"w_{name}={w} outside [0, 1]")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w_x, self.w_y, self.w_z, self.w_psi)


@dataclass(frozen=True, slots=True)
class FusedPose:
    e_x: float
    e_y: float
    e_z: float
    e_psi: float
    stage: Stage
    fresh: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "e_psi", wrap_deg(self.e_psi))


@dataclass(frozen=True, slots=True)
class LmsSample:
    est_m1: RelPose
    est_m2: RelPose
    truth: RelPose


@dataclass(frozen=True, slots=True)
class LmsFit:
    weights: WeightSet
    initial_cost: float
    final_cost: float
    # components whose weight could not be identified (kept at the initial value)
    degenerate: tuple[str, ...] = ()


def classify_stage(m1_present: bool, m2_present: bool) -> Stage | None:
    """Stage from which markers have a usable pose; ``None`` when neither does."""
    if m1_present and m2_present:
        return Stage.S2
    if m1_present:
        return Stage.S1
    if m2_present:
        return Stage.S3
    return None


def merge(
    stage: Stage,
    p_m1: RelPose | None,
    p_m2: RelPose | None,
    w: WeightSet,
    *,
    fresh: bool = True,
) -> FusedPose:
    if stage is Stage.S1:
        if p_m1 is None:
            raise MissingPose("stage S1 needs the large-marker pose")
        return FusedPose(p_m1.x, p_m1.y, p_m1.z, p_m1.yaw, stage, fresh)
    if stage is Stage.S3:
        if p_m2 is None:
            raise MissingPose("stage S3 needs the small-marker pose")
        return FusedPose(p_m2.x, p_m2.y, p_m2.z, p_m2.yaw, stage, fresh)
    if p_m1 is None or p_m2 is None:
        raise MissingPose("stage S2 needs both marker poses")
    return FusedPose(
        w.w_x * p_m1.x + (1.0 - w.w_x) * p_m2.x,
        w.w_y * p_m1.y + (1.0 - w.w_y) * p_m2.y,
        w.w_z * p_m1.z + (1.0 - w.w_z) * p_m2.z,
        p_m2.yaw + w.w_psi * angle_diff_deg(p_m1.yaw, p_m2.yaw),
        stage,
        fresh,
    )


def _component_arrays(samples: Sequence[LmsSample]) -> tuple[np.ndarray, np.ndarray]:
    """Per-component ``d = m1 - m2`` and ``t = truth - m2``, shape (4, n).

    Yaw differences are wrapped so the problem stays linear across +-180.
    """
    m1 = np.array([s.est_m1.as_array() for s in samples]).T
    m2 = np.array([s.est_m2.as_array() for s in samples]).T
    tr = np.array([s.truth.as_array() for s in samples]).T
    d = m1 - m2
    t = tr - m2
    wrap = np.vectorize(wrap_deg, otypes=[float])
    d[3] = wrap(d[3])
    t[3] = wrap(t[3])
    return d, t


def least_squares_weights(samples: Sequence[LmsSample]) -> tuple[float | None, ...]:
    """Closed-form per-component minimizer ``sum(t d) / sum(d^2)``, unclamped.

    ``None`` for a component whose differences are all zero.
    """
    d, t = _component_arrays(samples)
    out = []
    for k in range(4):
        den = float(np.dot(d[k], d[k]))
        out.append(None if den == 0.0 else float(np.dot(t[k], d[k])) / den)
    return tuple(out)


def fit_weights_lms(
    samples: Sequence[LmsSample],
    step: float = 0.01,
    epochs: int = 50,
    *,
    decay: bool = True,
    initial: float = 0.5,
) -> LmsFit:
    """Fit the four merge weights by per-component scalar LMS.

    Each sample updates ``w <- w + mu * err * (c_m1 - c_m2)`` with
    ``err = truth_c - merged_c``, then clamps ``w`` to [0, 1]. With ``decay``
    the step for epoch ``e`` is ``step / (1 + e)``. Costs are mean squared
    merge errors over all samples, per component summed.
    """
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    if step <= 0 or epochs < 1:
        raise ValueError("step must be positive and epochs >= 1")
    d, t = _component_arrays(samples)
    w = np.full(4, float(initial))
    degenerate = tuple(COMPONENTS[k] for k in range(4) if not np.any(d[k]))
    active = [k for k in range(4) if COMPONENTS[k] not in degenerate]

    def cost(weights: np.ndarray) -> float:
        e = t - weights[:, None] * d
        return float(np.mean(np.sum(e * e, axis=0)))

    initial_cost = cost(w)
    dl, tl = d.tolist(), t.tolist()
    for epoch in range(epochs):
        mu = step / (1.0 + epoch) if decay else step
        for k in active:
            wk = float(w[k])
            for dki, tki in zip(dl[k], tl[k]):
                err = tki - wk * dki
                wk = min(1.0, max(0.0, wk + mu * err * dki))
            w[k] = wk
    final = WeightSet(*(float(v) for v in w))
    return LmsFit(final, initial_cost, cost(w), degenerate)

