import dataclasses
import io
import math

import numpy as np
import pytest

from perchsim.fusion import Stage
from perchsim.geometry import RelPose
from perchsim.planner import Mode, Phase
from perchsim.sim.config import (
    InvalidConfig,
    ScenarioConfig,
    config_from_dict,
    config_to_dict,
    dump_config,
    load_config,
)
from perchsim.sim.dynamics import DroneState
from perchsim.sim.kfdemo import gap_demo
from perchsim.sim.montecarlo import monte_carlo, scenario_for_seed
from perchsim.sim.replay import replay_estimation, stationary_segments
from perchsim.sim.scenario import RunResult, run_estimation, run_scenario
from perchsim.sim.sensing import drone_for_relative, relative_pose, sense
from perchsim.sim.trace import COLUMNS, read_trace, trace_to_csv, write_trace

CFG = ScenarioConfig()


def with_noise(cfg=CFG, **kw):
    return dataclasses.replace(cfg, noise=dataclasses.replace(cfg.noise, **kw))


QUIET = with_noise(pixel_sigma=0.0, dropout_p=0.0)


# --- sensing -----------------------------------------------------------------


@pytest.mark.parametrize("rel", [RelPose(3, -2, 40, 25), RelPose(-10, 5, 80, -170)])
def test_relative_pose_inverse(rel):
    cfg = dataclasses.replace(CFG, target_position=(5.0, -3.0, 0.0), target_yaw=40.0)
    back = relative_pose(cfg, drone_for_relative(cfg, rel))
    assert back.as_array() == pytest.approx(rel.as_array(), abs=1e-9)


def test_sense_both_markers_mid_range():
    det = sense(QUIET, drone_for_relative(QUIET, RelPose(0, 0, 24, 0)), np.random.default_rng(0))
    assert det.detected(5) and det.detected(997)
    assert det.poses[997].z == pytest.approx(24, abs=1e-6)


def test_sense_nothing_beyond_range():
    det = sense(QUIET, drone_for_relative(QUIET, RelPose(0, 0, 120, 0)), np.random.default_rng(0))
    assert not det.poses


def test_sense_burst_blanks_but_draws():
    a, b = np.random.default_rng(3), np.random.default_rng(3)
    drone = drone_for_relative(QUIET, RelPose(0, 0, 50, 0))
    assert not sense(QUIET, drone, a, burst=True).poses
    sense(QUIET, drone, b)
    assert a.random() == b.random()


# --- closed loop ---------------------------------------------------------------


def test_noiseless_run_perches_centered():
    out, trace = run_scenario(QUIET)
    assert out.result is RunResult.PERCHED
    assert out.final_lateral_error_cm <= 0.5
    assert out.perch_attempts_used == 1
    assert trace[-1].phase is Phase.PERCHED and trace[-1].attached


def test_nominal_seed_regression():
    out, _ = run_scenario(CFG)
    assert out.result is RunResult.PERCHED
    assert out.final_lateral_error_cm <= 2.0
    assert (out.ticks_elapsed, out.perch_attempts_used) == (228, 1)


def test_starved_detector_safety_lands():
    out, trace = run_scenario(with_noise(dropout_p=0.95))
    assert out.result is RunResult.SAFETY_LANDED
    assert out.final_lateral_error_cm is None
    assert Phase.SAFETY_LAND in {r.phase for r in trace}


def test_max_ticks_gives_timeout():
    out, trace = run_scenario(dataclasses.replace(CFG, max_ticks=50))
    assert out.result is RunResult.TIMEOUT and len(trace) == 50


def test_trace_is_complete_and_ordered():
    _, trace = run_scenario(CFG)
    assert [r.tick for r in trace] == list(range(len(trace)))
    for r in trace:
        assert r.setpoint is not None and r.phase is not None
        assert (r.fused is None) == (r.stage is None)
        assert r.m1_detected == (r.m1_raw is not None)
        assert r.m2_detected == (r.m2_raw is not None)


def test_stage_order_on_noiseless_ascent():
    _, trace = run_scenario(QUIET)
    order = {Stage.S1: 1, Stage.S2: 2, Stage.S3: 3}
    seq = [order[r.stage] for r in trace if r.stage is not None]
    assert seq == sorted(seq)
    assert set(seq) == {1, 2, 3}


def test_drone_respects_speed_limits():
    _, trace = run_scenario(CFG)
    cm = CFG.controller
    for a, b in zip(trace, trace[1:]):
        if b.setpoint.mode is not Mode.POSITION:
            continue
        dx = b.drone.position[0] - a.drone.position[0]
        dy = b.drone.position[1] - a.drone.position[1]
        dz = b.drone.position[2] - a.drone.position[2]
        assert math.hypot(dx, dy) <= cm.v_max_xy * CFG.dt + 1e-9
        assert abs(dz) <= cm.v_max_z * CFG.dt + 1e-9


def test_reproducible_trace():
    assert trace_to_csv(run_scenario(CFG)[1]) == trace_to_csv(run_scenario(CFG)[1])
    other = dataclasses.replace(CFG, seed=43)
    assert trace_to_csv(run_scenario(CFG)[1]) != trace_to_csv(run_scenario(other)[1])


def test_retreats_after_failed_attach():
    out, trace = run_scenario(dataclasses.replace(CFG, force_attach_fail=True))
    assert out.result is RunResult.SAFETY_LANDED
    assert out.perch_attempts_used == CFG.planner.max_perch_attempts


# --- monte carlo -----------------------------------------------------------------


def test_monte_carlo_single_equals_run():
    s = monte_carlo(CFG, 1, 7)
    out, _ = run_scenario(scenario_for_seed(CFG, 7))
    assert s.outcomes == (out,)


def test_start_poses_stay_in_box():
    box = CFG.start_box
    for seed in range(50):
        c = scenario_for_seed(CFG, seed)
        off = np.subtract(c.start_position, CFG.start_position)
        assert np.all(np.abs(off) <= (box.half_x, box.half_y, box.half_z))
        assert abs(c.start_yaw) <= box.yaw_range


@pytest.mark.slow
def test_noiseless_monte_carlo_always_perches():
    s = monte_carlo(QUIET, 50, 0)
    assert s.success_rate == 1.0
    assert s.p95_lateral_error_cm <= 0.5


def test_monte_carlo_rejects_zero_runs():
    with pytest.raises(ValueError):
        monte_carlo(CFG, 0, 0)


# --- estimation replay -----------------------------------------------------------


def test_replay_stationary_estimate():
    drone = drone_for_relative(CFG, RelPose(2, -3, 40, 10))
    trace = run_estimation(CFG, [drone] * 100)
    rep = replay_estimation(trace, CFG)
    assert len(rep.segments) == 1
    seg = rep.segments[0]
    assert seg.start == 30 and seg.end == 100
    assert max(seg.peak_to_peak[:3]) <= 0.8
    assert max(abs(v) for v in seg.mean_error[:3]) <= 0.5


def test_stationary_segments_split_on_motion():
    states = [DroneState((0, 0, -40), 0)] * 20 + [DroneState((1, 0, -40), 0)] * 20
    trace = run_estimation(QUIET, states)
    assert stationary_segments(trace, 10) == [(0, 20), (20, 40)]


def test_gap_demo_holds_then_goes_stale():
    g = gap_demo(CFG, gap_start=90, gap_ticks=30)
    n_max = CFG.kf.n_max
    assert g.stale_tick == 90 + n_max
    assert g.max_gap_error_cm < 1.0
    assert g.redetect_jump_cm < 1.0
    with pytest.raises(ValueError):
        gap_demo(CFG, gap_start=230, gap_ticks=30, ticks=240)


# --- config and trace I/O ---------------------------------------------------------


def test_config_yaml_round_trip(tmp_path):
    cfg = dataclasses.replace(
        CFG, seed=9, noise=dataclasses.replace(CFG.noise, dropout_p=0.2), target_position=(1.0, 2.0, 0.0)
    )
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg
    assert config_from_dict(config_to_dict(cfg)) == cfg


def test_config_overrides_and_tick_rate():
    cfg = config_from_dict({"tick_rate": 60}, seed=5)
    assert cfg.seed == 5 and cfg.kf.dt == pytest.approx(1 / 60)


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"noise": {"dropout_p": 1.5}},
        {"noise": {"nope": 1}},
        {"start_position": [0, 0, 10]},
        {"kf": {"dt": 0.1}},
        {"controller": {"tau_xy": -1}},
    ],
)
def test_invalid_configs(data):
    with pytest.raises(InvalidConfig):
        config_from_dict(data)


def test_load_config_rejects_non_mapping(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(InvalidConfig):
        load_config(path)


def test_trace_csv_round_trip(tmp_path):
    _, trace = run_scenario(CFG)
    text = trace_to_csv(trace)
    assert text.splitlines()[0].split(",") == COLUMNS
    path = tmp_path / "t.csv"
    write_trace(trace, path)
    back = read_trace(path)
    assert len(back) == len(trace)
    assert trace_to_csv(back) == text
    assert read_trace(io.StringIO(text))[5].phase is trace[5].phase
