"""Detection-gap injection on a slowly drifting drone."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from perchsim.sim.config import ScenarioConfig
from perchsim.sim.dynamics import DroneState
from perchsim.sim.replay import estimation_errors
from perchsim.sim.scenario import run_estimation
from perchsim.sim.trace import TraceRecord


@dataclass(frozen=True, slots=True)
class GapDemo:
    trace: list[TraceRecord]
    gap_start: int
    gap_ticks: int
    redetect_jump_cm: float  # largest per-axis change from the last held estimate to the re-detected one
    max_gap_error_cm: float  # largest per-axis position error while detections were missing
    stale_tick: int | None  # first tick with no usable fused pose

    def summary(self) -> dict:
        return {
            "gap_start": self.gap_start,
            "gap_ticks": self.gap_ticks,
            "redetect_jump_cm": self.redetect_jump_cm,
            "max_gap_error_cm": self.max_gap_error_cm,
            "stale_tick": self.stale_tick,
        }


def gap_demo(
    cfg: ScenarioConfig,
    *,
    gap_start: int = 90,
    gap_ticks: int = 30,
    speed: float = 1.0,
    ticks: int = 240,
    height: float = 20.0,
) -> GapDemo:
    """Drift along world x at ``speed`` cm/s, ``height`` cm below the target, and
    blank the camera for ``gap_ticks`` frames starting at ``gap_start``."""
    if not 0 < gap_start < gap_start + gap_ticks < ticks:
        raise ValueError("gap must lie strictly inside the run")
    cfg = dataclasses.replace(cfg, noise=dataclasses.replace(cfg.noise, burst_p=0.0))
    tx, ty, tz = cfg.target_position
    x0 = tx - speed * ticks * cfg.dt / 2.0
    states = [DroneState((x0 + speed * k * cfg.dt, ty, tz - height), cfg.target_yaw) for k in range(ticks)]
    trace = run_estimation(cfg, states, missing_ticks=range(gap_start, gap_start + gap_ticks))

    end = gap_start + gap_ticks
    redetect = next((k for k in range(end, ticks) if trace[k].m1_detected or trace[k].m2_detected), None)
    jump = float("nan")
    # compare against the last estimate held before re-detection (it may be stale)
    before = next((trace[k].fused for k in range(end - 1, -1, -1) if trace[k].fused is not None), None)
    if redetect is not None and trace[redetect].fused is not None and before is not None:
        a, b = before, trace[redetect].fused
        jump = max(abs(b.e_x - a.e_x), abs(b.e_y - a.e_y), abs(b.e_z - a.e_z))
    err = estimation_errors(trace)[gap_start:end, :3]
    err = err[~np.isnan(err).any(axis=1)]
    stale = next((k for k in range(gap_start, end) if trace[k].fused is None), None)
    return GapDemo(
        trace,
        gap_start,
        gap_ticks,
        jump,
        float(np.abs(err).max()) if err.size else float("nan"),
        stale,
    )
