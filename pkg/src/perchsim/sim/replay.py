"""Estimation error analysis over recorded traces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from perchsim.angles import angle_diff_deg
from perchsim.sim.config import ScenarioConfig
from perchsim.sim.trace import TraceRecord


@dataclass(frozen=True, slots=True)
class Segment:
    start: int  # first tick index used (after settling)
    end: int  # exclusive
    peak_to_peak: tuple[float, float, float, float]  # x, y, z, psi
    mean_error: tuple[float, float, float, float]
    max_abs_error: tuple[float, float, float, float]


@dataclass(frozen=True, slots=True)
class ReplayReport:
    errors: np.ndarray  # (n_ticks, 4) fused minus true; NaN where no fused pose
    segments: tuple[Segment, ...]


def estimation_errors(trace: Sequence[TraceRecord]) -> np.ndarray:
    out = np.full((len(trace), 4), np.nan)
    for i, r in enumerate(trace):
        f, t = r.fused, r.true_pose
        if f is None:
            continue
        out[i] = (f.e_x - t.x, f.e_y - t.y, f.e_z - t.z, angle_diff_deg(f.e_psi, t.yaw))
    return out


def stationary_segments(trace: Sequence[TraceRecord], min_len: int) -> list[tuple[int, int]]:
    """Maximal runs of ticks with an unchanged true relative pose."""
    segs = []
    start = 0
    for i in range(1, len(trace) + 1):
        if i == len(trace) or trace[i].true_pose != trace[start].true_pose:
            if i - start >= min_len:
                segs.append((start, i))
            start = i
    return segs


def replay_estimation(
    trace: Sequence[TraceRecord],
    cfg: ScenarioConfig,
    *,
    settle_s: float = 1.0,
    min_len: int = 10,
) -> ReplayReport:
    """Per-tick estimation errors plus per-axis statistics on stationary segments.

    The first ``settle_s`` seconds of each segment are skipped so the filter's
    start-up transient does not count toward the peak-to-peak spread.
    """
    errors = estimation_errors(trace)
    settle = int(round(settle_s * cfg.tick_rate))
    segments = []
    for a, b in stationary_segments(trace, min_len + settle):
        e = errors[a + settle : b]
        e = e[~np.isnan(e).any(axis=1)]
        if len(e) == 0:
            continue
        segments.append(
            Segment(
                a + settle,
                b,
                tuple(float(v) for v in e.max(axis=0) - e.min(axis=0)),  # type: ignore[arg-type]
                tuple(float(v) for v in e.mean(axis=0)),  # type: ignore[arg-type]
                tuple(float(v) for v in np.abs(e).max(axis=0)),  # type: ignore[arg-type]
            )
        )
    return ReplayReport(errors, tuple(segments))
