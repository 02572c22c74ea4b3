"""Analysis tests: smoothing, slopes, stages, metrics, loop areas."""

import csv
import json
import math

import numpy as np
import pytest

from linkswim.analysis import (
    HALF_WINDOW,
    SMOOTH_WINDOW,
    StageLabels,
    TrajectoryTooShort,
    centroid_series,
    classify_stages,
    evaluate_trial,
    rollout_deterministic,
    slope_angle,
    smooth_path,
    stroke_loop_area,
    success_rate,
    translation_metrics,
    write_smoothed_csv,
    write_summary_json,
    write_trajectory_csv,
)
from linkswim.dynamics import JointRates, SwimmerState, integrate_segment
from linkswim.nets import GaussianPolicy


def line_path(n, v=0.01, angle=0.0, dt=0.1):
    t = np.arange(n) * dt
    return np.column_stack([v * t * math.cos(angle),
                            v * t * math.sin(angle)])


# ------------------------------------------------------------ smoothing


def test_smooth_constant_path():
    raw = np.tile([1.5, -2.0], (100, 1))
    sp = smooth_path(raw)
    assert len(sp.positions) == 100 - 2 * HALF_WINDOW
    assert np.abs(sp.positions - [1.5, -2.0]).max() < 1e-14


def test_smooth_preserves_linear_drift():
    raw = line_path(200, v=0.37, angle=0.3)
    sp = smooth_path(raw)
    want = raw[HALF_WINDOW:200 - HALF_WINDOW]
    assert np.abs(sp.positions - want).max() < 1e-12


def test_smooth_attenuates_window_period_sinusoid():
    n = 400
    k = np.arange(n)
    wiggle = 0.05 * np.sin(2 * np.pi * k / SMOOTH_WINDOW)
    raw = line_path(n, v=0.02)
    raw[:, 1] += wiggle
    sp = smooth_path(raw)
    resid = sp.positions[:, 1] - raw[HALF_WINDOW:n - HALF_WINDOW, 1]
    # residual against the line = what's left of the sinusoid
    left = np.abs(sp.positions[:, 1]
                  - 0.0).max()  # the line has y = 0 without the wiggle
    assert left < 0.05 * 0.05  # >95% attenuation


def test_smooth_rejects_short_path():
    with pytest.raises(TrajectoryTooShort):
        smooth_path(np.zeros((70, 2)))


def test_smooth_translation_equivariant():
    rng = np.random.default_rng(1)
    raw = np.cumsum(rng.standard_normal((150, 2)) * 0.01, axis=0)
    shift = np.array([3.0, -1.0])
    a = smooth_path(raw + shift).positions
    b = smooth_path(raw).positions + shift
    assert np.abs(a - b).max() < 1e-12


def test_smooth_rotation_equivariant():
    rng = np.random.default_rng(2)
    raw = np.cumsum(rng.standard_normal((150, 2)) * 0.01, axis=0)
    phi = 0.7
    R = np.array([[math.cos(phi), -math.sin(phi)],
                  [math.sin(phi), math.cos(phi)]])
    a = smooth_path(raw @ R.T).positions
    b = smooth_path(raw).positions @ R.T
    assert np.abs(a - b).max() < 1e-12


# ------------------------------------------------------------ slope angle


def test_slope_horizontal():
    theta = slope_angle(smooth_path(line_path(120)))
    assert np.abs(theta).max() == 0.0


def test_slope_diagonal():
    theta = slope_angle(smooth_path(line_path(120, angle=math.pi / 4)))
    assert np.abs(theta - math.pi / 4).max() < 1e-12


def test_slope_circle_arc_linear_in_parameter():
    n = 500
    t = np.arange(n) * 0.002
    raw = np.column_stack([np.cos(t), np.sin(t)])
    theta = slope_angle(smooth_path(raw))
    d = np.diff(theta)
    # tangent angle advances by the constant parameter increment
    assert np.abs(d - 0.002).max() < 1e-6


def test_slope_undefined_on_repeated_points():
    raw = np.tile([0.5, 0.5], (100, 1))
    theta = slope_angle(smooth_path(raw))
    assert np.all(np.isnan(theta))


def test_slope_rotation_adds_angle():
    rng = np.random.default_rng(3)
    steps = rng.standard_normal((200, 2)) * 0.01 + [0.05, 0.0]
    raw = np.cumsum(steps, axis=0)
    phi = 1.1
    R = np.array([[math.cos(phi), -math.sin(phi)],
                  [math.sin(phi), math.cos(phi)]])
    t0 = slope_angle(smooth_path(raw))
    t1 = slope_angle(smooth_path(raw @ R.T))
    mismatch = np.abs(np.exp(1j * (t1 - t0 - phi)) - 1.0)
    assert mismatch.max() < 1e-10


# ------------------------------------------------------------ stages


def test_stages_all_translation():
    st = classify_stages(np.zeros(50))
    assert (st.start, st.stop) == (0, 50)
    assert st.translation.all()


def test_stages_all_steering():
    st = classify_stages(np.full(50, math.radians(10)))
    assert st.start is None and st.stop is None
    assert not st.translation.any()


def test_stages_step_profile():
    j = 17
    theta = np.concatenate([np.full(j, math.radians(10)), np.zeros(40)])
    st = classify_stages(theta)
    assert (st.start, st.stop) == (j, j + 40)


def test_stages_trailing_excursion_keeps_longest_run():
    theta = np.concatenate([np.zeros(40), [math.radians(5)]])
    st = classify_stages(theta)
    assert (st.start, st.stop) == (0, 40)


def test_stages_longest_run_wins():
    deg5 = math.radians(5)
    theta = np.concatenate([np.zeros(3), [deg5], np.zeros(10),
                            [deg5], np.zeros(5)])
    st = classify_stages(theta)
    assert (st.start, st.stop) == (4, 14)


def test_stages_first_run_wins_ties():
    deg5 = math.radians(5)
    theta = np.concatenate([np.zeros(4), [deg5], np.zeros(4)])
    st = classify_stages(theta)
    assert (st.start, st.stop) == (0, 4)


def test_stages_nan_not_translation():
    theta = np.array([np.nan, 0.0, 0.0])
    st = classify_stages(theta)
    assert not st.translation[0]
    assert (st.start, st.stop) == (1, 3)


# ------------------------------------------------------------ metrics


def test_translation_metrics_exact_on_prescribed_motion():
    v = 0.0123
    phi = 4.2e-4
    dt = 0.1
    raw = line_path(400, v=v, dt=dt)
    powers = np.full(399, phi)
    m = translation_metrics(raw, powers, dt)
    assert m.mean_speed == pytest.approx(v, rel=1e-12)
    assert m.mean_efficiency == pytest.approx(0.5 * v * v / phi, rel=1e-12)
    assert m.start == 0


def test_translation_metrics_requires_stage():
    raw = np.column_stack([np.zeros(300), np.arange(300) * 0.01])  # due north
    with pytest.raises(ValueError):
        translation_metrics(raw, np.full(299, 1e-4), 0.1)


def test_translation_metrics_skips_steering_prefix():
    dt = 0.1
    # quarter-turn arc then a straight run along x
    t = np.linspace(0, math.pi / 2, 200)
    arc = np.column_stack([np.sin(t), 1.0 - np.cos(t)])  # ends heading +x
    tail = arc[-1] + line_path(300, v=0.02, dt=dt)[1:]
    raw = np.vstack([arc, tail])
    powers = np.full(len(raw) - 1, 2e-4)
    m = translation_metrics(raw, powers, dt)
    assert m.start > 0
    assert m.mean_speed == pytest.approx(0.02, rel=1e-6)


def test_efficiency_invariant_under_time_rescale():
    # the same joint-space stroke driven twice as fast: speed doubles,
    # power quadruples, towing efficiency unchanged. Stroke period is one
    # smoothing window so the moving average cancels the ripple exactly.
    from linkswim.dynamics import state_centroid

    dt = 0.05
    omega = 2 * math.pi / (SMOOTH_WINDOW * dt)

    def run(scale, theta_T):
        state = SwimmerState(0.0, 0.0, 0.3, 0.0, -0.3)
        n = 600
        raws = np.empty((n + 1, 2))
        works = np.empty(n)
        raws[0] = state_centroid(state)
        for k in range(n):
            t = (k + 0.5) * dt * scale
            rates = JointRates(scale * 0.9 * math.cos(omega * t),
                               scale * 0.9 * math.sin(omega * t))
            seg = integrate_segment(state, rates, dt, 4)
            state = seg.end
            works[k] = seg.work
            raws[k + 1] = state_centroid(state)
        return raws, works

    raw_s, work_s = run(1.0, 0.0)
    sp = smooth_path(raw_s).positions
    drift = math.atan2(sp[-1, 1] - sp[0, 1], sp[-1, 0] - sp[0, 0])
    slow = translation_metrics(raw_s, work_s / dt, dt, theta_T=drift)
    raw_f, work_f = run(2.0, drift)
    fast = translation_metrics(raw_f, work_f / dt, dt, theta_T=drift)
    assert fast.mean_speed == pytest.approx(2 * slow.mean_speed, rel=0.01)
    assert fast.mean_efficiency == pytest.approx(slow.mean_efficiency,
                                                 rel=0.01)


# ------------------------------------------------------------ trials


def zero_policy():
    policy = GaussianPolicy(np.random.default_rng(0))
    policy.net.W[-1][:] = 0.0
    policy.net.b[-1][:] = 0.0
    return policy


def test_zero_rate_policy_never_succeeds():
    assert success_rate(zero_policy(), trials=3, master_seed=5,
                        n_steps=300) == 0.0


def test_success_rate_deterministic():
    policy = GaussianPolicy(np.random.default_rng(7))
    a = success_rate(policy, trials=5, master_seed=9, n_steps=300)
    b = success_rate(policy, trials=5, master_seed=9, n_steps=300)
    assert a == b


def test_success_rate_validates_trials():
    with pytest.raises(ValueError):
        success_rate(zero_policy(), trials=0)


def test_evaluate_trial_returns_stage_data():
    ok, states, work, stages = evaluate_trial(
        zero_policy(), np.random.default_rng(1), n_steps=200)
    assert ok is False
    assert states.shape == (201, 5)
    assert work.shape == (200,)
    assert isinstance(stages, StageLabels)


def test_rollout_deterministic_static_for_zero_policy():
    states, work = rollout_deterministic(
        zero_policy(), SwimmerState(0.0, 0.0, 0.2, 0.0, -0.2), 50)
    assert np.abs(states[-1] - states[0]).max() < 1e-12
    assert work.max() < 1e-20


# ------------------------------------------------------------ loop area


def test_stroke_loop_area_circle():
    rho = 0.8
    period = 80
    n = 600
    k = np.arange(n)
    a1 = rho * np.cos(2 * np.pi * k / period)
    a2 = rho * np.sin(2 * np.pi * k / period)
    states = np.zeros((n, 5))
    states[:, 2] = -a1  # theta1 = theta2 - alpha1 with theta2 = 0
    states[:, 4] = a2
    area = stroke_loop_area(states, tail=400)
    assert area == pytest.approx(math.pi * rho * rho, rel=0.01)


def test_stroke_loop_area_degenerate_line():
    n = 500
    k = np.arange(n)
    states = np.zeros((n, 5))
    states[:, 2] = -0.5 * np.sin(2 * np.pi * k / 50)  # both joints in phase
    states[:, 4] = 0.5 * np.sin(2 * np.pi * k / 50)
    area = stroke_loop_area(states, tail=400)
    assert area < 1e-10


# ------------------------------------------------------------ output files


def test_csv_and_json_writers(tmp_path):
    state = SwimmerState(0.0, 0.0, 0.3, 0.0, -0.3)
    states = [state.as_array()]
    works = []
    for k in range(150):
        rates = JointRates(0.9 * math.cos(0.5 * k * 0.1),
                           0.9 * math.sin(0.5 * k * 0.1))
        seg = integrate_segment(state, rates, 0.1, 4)
        state = seg.end
        works.append(seg.work)
        states.append(state.as_array())
    states = np.asarray(states)
    works = np.asarray(works)

    tpath = tmp_path / "traj.csv"
    write_trajectory_csv(tpath, states, works, 0.1)
    with open(tpath) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["step", "x_c", "y_c", "alpha1", "alpha2", "power"]
    assert len(rows) == 152
    cents = centroid_series(states)
    assert float(rows[1][1]) == cents[0, 0]
    assert float(rows[2][5]) == works[0] / 0.1

    sp = smooth_path(cents)
    theta = slope_angle(sp)
    labels = classify_stages(theta)
    spath = tmp_path / "smooth.csv"
    write_smoothed_csv(spath, sp, theta, labels)
    with open(spath) as fh:
        srows = list(csv.reader(fh))
    assert srows[0] == ["index", "x", "y", "theta_s", "stage"]
    assert len(srows) == len(sp.positions)  # header + (n-1) slope rows
    assert srows[1][4] in ("steering", "translation")

    jpath = tmp_path / "summary.json"
    doc = write_summary_json(jpath, success=0.93, extra={"seed": 3})
    loaded = json.loads(jpath.read_text())
    assert loaded == doc
    assert loaded["success_rate"] == 0.93 and loaded["seed"] == 3
