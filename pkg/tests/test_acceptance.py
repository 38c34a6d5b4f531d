"""Acceptance criteria 1-9, one test each.

Each test records a PASS/FAIL line (shown in the pytest terminal summary) and
then asserts at the stated tolerance. Run just this file with
``pytest tests/test_acceptance.py -v``.
"""

import dataclasses
import filecmp
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acceptance_report import report
from perchsim import kalman as kf
from perchsim.angles import angle_diff_deg
from perchsim.cli import pnp_round_trip
from perchsim.fusion import FusedPose, LmsSample, Stage, WeightSet, classify_stage, fit_weights_lms, least_squares_weights, merge
from perchsim.geometry import CameraIntrinsics, RelPose
from perchsim.planner import Mode, Phase, PlannerConfig, PlannerInput, PlannerState, is_terminal, planner_step
from perchsim.sim.config import ScenarioConfig
from perchsim.sim.montecarlo import monte_carlo
from perchsim.sim.replay import replay_estimation
from perchsim.sim.scenario import PoseEstimator, RunResult, run_estimation, run_scenario
from perchsim.sim.sensing import DetectionSet, drone_for_relative
from perchsim.sim.trace import write_trace

CFG = ScenarioConfig()
HOVER_POSITIONS = [(0, 0, 24), (4, 6, 16), (5, -7, 11), (-10, 11, 7), (-6, -3, 18)]
HOVER_HEADINGS = [175, -165, 125, -90, 30, -15, 5, 1]
REFERENCE_WEIGHTS = (0.275, 0.306, 0.728, 0.469)
SETTLE_TICKS = 30  # one second at 30 Hz, excluded from the statistics


def test_1_pnp_round_trip():
    r = pnp_round_trip(1000, seed=2024)
    ok = r["max_translation_error_cm"] <= 1e-6 and r["max_yaw_error_deg"] <= 1e-6 and r["runtime_s"] < 5.0
    report(
        1,
        "PnP round trip",
        ok,
        f"max err {r['max_translation_error_cm']:.2e} cm / {r['max_yaw_error_deg']:.2e} deg, {r['runtime_s']:.2f} s",
    )
    assert ok


def test_2_kalman_gap():
    p = kf.KfParams()
    v = np.array([12.0, 3.0, -2.0, 1.5])  # yaw, x, y, z rates per second
    x0 = np.array([10.0, -4.0, 6.0, 40.0])
    s = None
    for k in range(90):
        s = kf.step(s, x0 + v * k * p.dt, p)
    held = s.x_hat.copy()
    pos0, vel0 = held[kf.POS_IDX], held[kf.VEL_IDX]
    worst = 0.0
    for k in range(1, 9):
        s = kf.step(s, None, p)
        expected = pos0 + vel0 * p.dt * (1 - p.alpha**k) / (1 - p.alpha)
        worst = max(worst, float(np.abs(s.x_hat[kf.POS_IDX] - expected).max()))
    on_time = s.valid and np.allclose(s.x_hat[kf.VEL_IDX], vel0 * p.alpha**8, rtol=1e-12)
    s = kf.step(s, None, p)
    stale = (not s.valid) and bool(np.all(s.x_hat[kf.VEL_IDX] == 0.0))

    # the same gap through the estimator: the fused pose disappears on frame 9
    est = PoseEstimator(CFG)
    truth = RelPose(0, 0, 40, 0)
    fused = []
    for k in range(40):
        seen = k < 20
        det = DetectionSet(truth, poses={5: truth, 997: truth} if seen else {})
        fused.append(est.update(det))
    gap = fused[20:29]
    fused_ok = all(f is not None and not f.fresh for f in gap[:8]) and gap[8] is None

    ok = worst <= 1e-9 and on_time and stale and fused_ok
    report(2, "Kalman gap", ok, f"max deviation {worst:.1e}, stale at frame 9: {stale and fused_ok}")
    assert ok


def _stationary_peak_to_peak(cfg, rel):
    drone = drone_for_relative(cfg, rel)
    trace = run_estimation(cfg, [drone] * (SETTLE_TICKS + 100))
    rep = replay_estimation(trace, cfg, settle_s=SETTLE_TICKS / cfg.tick_rate)
    assert len(rep.segments) == 1
    return rep.segments[0]


def test_3_stationary_position_spread():
    # the default 460 px lens cannot frame the two closest hover points; use a wide lens
    cfg = dataclasses.replace(CFG, intrinsics=CameraIntrinsics.from_hfov(140.0))
    assert (cfg.noise.pixel_sigma, cfg.noise.dropout_p) == (0.3, 0.1)
    worst = 0.0
    rows = []
    for pos in HOVER_POSITIONS:
        seg = _stationary_peak_to_peak(cfg, RelPose(*pos, 0.0))
        ptp = max(seg.peak_to_peak[:3])
        worst = max(worst, ptp)
        rows.append(f"{pos}:{ptp:.3f}")
    ok = worst <= 0.8
    report(
        3,
        "Stationary position spread",
        ok,
        f"worst per-axis peak-to-peak {worst:.3f} cm (<=0.8: {worst <= 0.8}, <=0.6: {worst <= 0.6}) " + " ".join(rows),
    )
    assert ok


def test_4_heading_accuracy():
    worst = 0.0
    for heading in HOVER_HEADINGS:
        seg = _stationary_peak_to_peak(CFG, RelPose(0.0, 0.0, 24.0, heading))
        worst = max(worst, seg.max_abs_error[3])
    ok = worst <= 3.0
    report(4, "Heading accuracy", ok, f"worst heading error {worst:.3f} deg over {len(HOVER_HEADINGS)} headings")
    assert ok


def test_5_lms_weights():
    rng = np.random.default_rng(5)
    w = np.array(REFERENCE_WEIGHTS)
    samples = []
    for _ in range(1000):
        truth = np.array([rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(12, 25), rng.uniform(-30, 30)])
        d = rng.normal(0.0, 2.0, 4)
        m2 = truth - w * d + rng.normal(0.0, 0.05, 4)
        m1 = m2 + d
        samples.append(LmsSample(RelPose(*m1), RelPose(*m2), RelPose(*truth)))
    fit = fit_weights_lms(samples)
    oracle = np.array(least_squares_weights(samples), dtype=float)
    got = np.array(fit.weights.as_tuple())
    to_ref = float(np.abs(got - w).max())
    to_oracle = float(np.abs(got - oracle).max())
    ok = to_ref <= 0.05 and to_oracle <= 1e-3
    report(
        5,
        "LMS weight recovery",
        ok,
        f"weights {np.round(got, 4).tolist()}, |w - reference| {to_ref:.4f}, |w - oracle| {to_oracle:.2e}",
    )
    assert ok


@pytest.fixture(scope="module")
def mc_serial():
    t0 = time.perf_counter()
    summary = monte_carlo(CFG, 200, 1000, workers=1)
    return summary, time.perf_counter() - t0


def test_6_monte_carlo(mc_serial):
    summary, elapsed = mc_serial
    box = CFG.start_box
    assert (2 * box.half_x, 2 * box.half_y, 2 * box.half_z) == (40, 40, 30)
    p95 = summary.p95_lateral_error_cm
    ok = summary.success_rate >= 0.95 and p95 is not None and p95 <= 2.0 and elapsed < 60.0
    report(
        6,
        "Monte Carlo",
        ok,
        f"success {summary.success_rate:.3f}, p95 lateral {p95:.3f} cm, counts {summary.counts}, {elapsed:.1f} s",
    )
    assert ok


def _episodes(trace, mode):
    eps, start = [], None
    for i, r in enumerate(trace):
        on = r.setpoint.mode is mode
        if on and start is None:
            start = i
        if not on and start is not None:
            eps.append((start, i))
            start = None
    if start is not None:
        eps.append((start, len(trace)))
    return eps


def test_7_exhaustion_paths():
    starved = dataclasses.replace(CFG, noise=dataclasses.replace(CFG.noise, dropout_p=0.95))
    out_a, trace_a = run_scenario(starved)
    searched = [r.phase for r in trace_a].count(Phase.SEARCH) >= CFG.planner.max_search_attempts
    path_a = out_a.result is RunResult.SAFETY_LANDED and searched

    out_b, trace_b = run_scenario(dataclasses.replace(CFG, force_attach_fail=True))
    bursts = _episodes(trace_b, Mode.THROTTLE_BURST)
    retreats = []
    for (_, end), (nxt, _) in zip(bursts, bursts[1:]):
        z_top = trace_b[end - 1].drone.position[2]
        hold = trace_b[end].setpoint.z_d
        lowest = min(r.drone.position[2] for r in trace_b[end:nxt])
        retreats.append((z_top - hold, z_top - lowest))
    retreat_ok = all(abs(cmd - 10.0) < 1e-9 and flown >= 9.5 for cmd, flown in retreats)
    path_b = (
        out_b.result is RunResult.SAFETY_LANDED
        and len(bursts) == 3
        and retreat_ok
        and trace_b[bursts[-1][1]].phase is Phase.SAFETY_LAND
    )
    ok = path_a and path_b
    detail = ", ".join(f"cmd {c:.1f}/flown {f:.2f} cm" for c, f in retreats)
    report(
        7,
        "Planner exhaustion",
        ok,
        f"dropout 0.95 -> {out_a.result.value}; forced failure -> {len(bursts)} bursts ({detail}) -> {out_b.result.value}",
    )
    assert ok


def test_8_determinism(tmp_path, mc_serial):
    paths = []
    for i in range(2):
        _, trace = run_scenario(CFG)
        paths.append(tmp_path / f"trace{i}.csv")
        write_trace(trace, paths[-1])
    same_trace = filecmp.cmp(paths[0], paths[1], shallow=False)
    serial, _ = mc_serial
    parallel = monte_carlo(CFG, 200, 1000, workers=2)
    same_mc = parallel.outcomes == serial.outcomes and parallel.as_dict() == serial.as_dict()
    ok = same_trace and same_mc
    report(8, "Determinism", ok, f"byte-identical trace {same_trace}, Monte Carlo workers 1 vs 2 identical {same_mc}")
    assert ok


# property checks ----------------------------------------------------------------

_finite = dict(allow_nan=False, allow_infinity=False)
_pose = st.builds(
    RelPose, st.floats(-50, 50, **_finite), st.floats(-50, 50, **_finite), st.floats(1, 120, **_finite), st.floats(-180, 180, **_finite)
)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.one_of(st.none(), st.lists(st.floats(-100, 100, **_finite), min_size=4, max_size=4)), max_size=40))
def _kf_psd(seq):
    p = kf.KfParams()
    s = kf.step(None, np.zeros(4), p)
    for z in seq:
        s = kf.step(s, None if z is None else np.array(z), p)
        assert np.allclose(s.P, s.P.T)
        assert np.linalg.eigvalsh(s.P).min() >= -1e-9


@settings(max_examples=300, deadline=None)
@given(_pose, _pose, st.tuples(*[st.floats(0, 1)] * 4))
def _merge_convex(a, b, w):
    f = merge(Stage.S2, a, b, WeightSet(*w))
    for lo, hi, v in ((a.x, b.x, f.e_x), (a.y, b.y, f.e_y), (a.z, b.z, f.e_z)):
        assert min(lo, hi) - 1e-9 <= v <= max(lo, hi) + 1e-9
    arc = abs(angle_diff_deg(a.yaw, b.yaw))
    assert abs(angle_diff_deg(f.e_psi, a.yaw)) <= arc + 1e-9
    assert abs(angle_diff_deg(f.e_psi, b.yaw)) <= arc + 1e-9


def _stage_total():
    table = {(True, False): Stage.S1, (True, True): Stage.S2, (False, True): Stage.S3, (False, False): None}
    for (m1, m2), expected in table.items():
        assert classify_stage(m1, m2) is expected


_planner_input = st.tuples(
    st.one_of(
        st.none(),
        st.builds(
            FusedPose,
            st.floats(-20, 20),
            st.floats(-20, 20),
            st.floats(0.5, 120),
            st.floats(-180, 180),
            st.sampled_from(list(Stage)),
            st.booleans(),
        ),
    ),
    st.booleans(),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(_planner_input, min_size=1, max_size=150))
def _planner_absorbing(seq):
    cfg = PlannerConfig(perch_timeout=1.5)
    s = PlannerState()
    for k, (f, attached) in enumerate(seq):
        before = s.phase
        s, sp = planner_step(s, PlannerInput(f, attached, (k + 1) / 30, (0.0, 0.0, -30.0), 0.0), cfg)
        if before in (Phase.PERCHED, Phase.LANDED):
            assert s.phase is before
        assert sp.mode is not Mode.POSITION or cfg.floor_z <= sp.z_d <= cfg.ceiling_z
    assert is_terminal(s) or len(seq) / 30 < cfg.perch_timeout + 0.1


def test_9_property_suites():
    results = {}
    for name, check in (
        ("KF covariance PSD", _kf_psd),
        ("merge convexity / shortest arc", _merge_convex),
        ("stage totality", _stage_total),
        ("planner absorbing terminals", _planner_absorbing),
    ):
        try:
            check()
            results[name] = True
        except AssertionError:
            results[name] = False
    ok = all(results.values())
    report(9, "Property suites", ok, ", ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in results.items()))
    assert ok
