"""Per-tick trace rows and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

from perchsim.fusion import FusedPose, Stage
from perchsim.geometry import RelPose
from perchsim.planner import Mode, Phase, Setpoint
from perchsim.sim.dynamics import DroneState


@dataclass(frozen=True, slots=True)
class TraceRecord:
    tick: int
    true_pose: RelPose
    m1_detected: bool
    m2_detected: bool
    m1_raw: RelPose | None
    m2_raw: RelPose | None
    m1_filtered: RelPose | None
    m2_filtered: RelPose | None
    stage: Stage | None
    fused: FusedPose | None
    phase: Phase | None
    setpoint: Setpoint | None
    attached: bool
    drone: DroneState


def _pose_cols(prefix: str) -> list[str]:
    return [f"{prefix}_{c}" for c in ("x", "y", "z", "yaw")]


COLUMNS: list[str] = (
    ["tick"]
    + _pose_cols("true")
    + ["m1_detected", "m2_detected"]
    + _pose_cols("m1_raw")
    + _pose_cols("m2_raw")
    + _pose_cols("m1_kf")
    + _pose_cols("m2_kf")
    + ["stage", "fused_x", "fused_y", "fused_z", "fused_psi", "fused_fresh"]
    + ["phase", "sp_x", "sp_y", "sp_z", "sp_psi", "sp_mode"]
    + ["attached"]
    + ["drone_x", "drone_y", "drone_z", "drone_yaw"]
)


def _f(v: float) -> str:
    return format(v, ".6g")


def _pose(p: RelPose | None) -> list[str]:
    return [""] * 4 if p is None else [_f(p.x), _f(p.y), _f(p.z), _f(p.yaw)]


def _b(v: bool) -> str:
    return "1" if v else "0"


def record_to_row(r: TraceRecord) -> list[str]:
    row = [str(r.tick)]
    row += _pose(r.true_pose)
    row += [_b(r.m1_detected), _b(r.m2_detected)]
    row += _pose(r.m1_raw) + _pose(r.m2_raw) + _pose(r.m1_filtered) + _pose(r.m2_filtered)
    row.append("" if r.stage is None else r.stage.value)
    if r.fused is None:
        row += [""] * 5
    else:
        f = r.fused
        row += [_f(f.e_x), _f(f.e_y), _f(f.e_z), _f(f.e_psi), _b(f.fresh)]
    row.append("" if r.phase is None else r.phase.value)
    if r.setpoint is None:
        row += [""] * 5
    else:
        s = r.setpoint
        row += [_f(s.x_d), _f(s.y_d), _f(s.z_d), _f(s.psi_d), s.mode.value]
    row.append(_b(r.attached))
    row += [_f(v) for v in r.drone.position] + [_f(r.drone.yaw)]
    return row


def write_trace(records: Iterable[TraceRecord], out: TextIO | str | Path) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as fh:
            write_trace(records, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in records:
        w.writerow(record_to_row(r))


def trace_to_csv(records: Iterable[TraceRecord]) -> str:
    buf = io.StringIO()
    write_trace(records, buf)
    return buf.getvalue()


def _opt_pose(row: dict[str, str], prefix: str) -> RelPose | None:
    vals = [row[c] for c in _pose_cols(prefix)]
    if vals[0] == "":
        return None
    return RelPose(*(float(v) for v in vals))


def read_trace(src: TextIO | str | Path) -> list[TraceRecord]:
    """Parse a trace CSV written by :func:`write_trace` (values at 6 significant digits)."""
    if isinstance(src, (str, Path)):
        with open(src, newline="") as fh:
            return read_trace(fh)
    records = []
    for row in csv.DictReader(src):
        stage = Stage(row["stage"]) if row["stage"] else None
        fused = None
        if row["fused_x"]:
            fused = FusedPose(
                float(row["fused_x"]),
                float(row["fused_y"]),
                float(row["fused_z"]),
                float(row["fused_psi"]),
                stage,  # type: ignore[arg-type]
                row["fused_fresh"] == "1",
            )
        sp = None
        if row["sp_mode"]:
            sp = Setpoint(
                float(row["sp_x"]), float(row["sp_y"]), float(row["sp_z"]), float(row["sp_psi"]), Mode(row["sp_mode"])
            )
        records.append(
            TraceRecord(
                tick=int(row["tick"]),
                true_pose=_opt_pose(row, "true"),  # type: ignore[arg-type]
                m1_detected=row["m1_detected"] == "1",
                m2_detected=row["m2_detected"] == "1",
                m1_raw=_opt_pose(row, "m1_raw"),
                m2_raw=_opt_pose(row, "m2_raw"),
                m1_filtered=_opt_pose(row, "m1_kf"),
                m2_filtered=_opt_pose(row, "m2_kf"),
                stage=stage,
                fused=fused,
                phase=Phase(row["phase"]) if row["phase"] else None,
                setpoint=sp,
                attached=row["attached"] == "1",
                drone=DroneState(
                    (float(row["drone_x"]), float(row["drone_y"]), float(row["drone_z"])), float(row["drone_yaw"])
                ),
            )
        )
    return records
