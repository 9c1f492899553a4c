"""Acceptance gate: one test per release criterion, self-contained oracles.

Each test prints as a single pass/fail line under pytest -v and checks the
full criterion, including runtime budgets where one is part of the bar.
"""

import json
import math
import time

import numpy as np
import pytest

from gazepick.calibration import (
    CalibrationSample,
    IrisPoint,
    ScreenPoint,
    fit_calibration,
    monomial_basis,
    monomial_exponents,
)
from gazepick.config import default_homography
from gazepick.dwell import DwellConfig, Outcome, Phase, dwell_init, dwell_tick, on_robot_done
from gazepick.experiment import improvement_fraction, run_experiment, summarize_experiment
from gazepick.geometry import (
    CameraModel,
    backproject_to_plane,
    estimate_homography,
    induced_homography,
    pixel_to_workspace,
    workspace_to_pixel,
)
from gazepick.session import Session, encode, identity_model, replay
from gazepick.smoothing import FilterParams, filter_init, filter_step
from gazepick.stats import f_sf, one_way_anova, repeated_measures_anova
from gazepick.workspace import BBox, CursorState, DetectionFrame, ViewMapping, snap, snap_disabled


def test_calibration_exactness():
    # noiseless degree-3 generator, 35 samples: recover the coefficients,
    # agree with a brute-force normal-equations solve, stay under 1 s
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    exps = monomial_exponents(3)
    true_x = rng.uniform(-50.0, 50.0, len(exps))
    true_y = rng.uniform(-50.0, 50.0, len(exps))
    true_x[0] += 640.0
    true_y[0] += 360.0

    samples = []
    for i in range(7):
        for j in range(5):
            u, v = i / 6.0, j / 4.0
            basis = monomial_basis(IrisPoint(u, v), 3)
            samples.append(
                CalibrationSample(
                    IrisPoint(u, v),
                    ScreenPoint(float(basis @ true_x), float(basis @ true_y)),
                )
            )
    assert len(samples) == 35

    model = fit_calibration(samples, degree=3)
    for got, want in ((model.coeffs_x, true_x), (model.coeffs_y, true_y)):
        scale = np.maximum(1.0, np.abs(want))
        assert np.all(np.abs(np.asarray(got) - want) / scale < 1e-6)
    assert model.residual_rms < 1e-6

    # independent oracle: solve the normal equations directly
    A = np.array([monomial_basis(s.iris, 3) for s in samples])
    for got, targets in (
        (model.coeffs_x, [s.target.x for s in samples]),
        (model.coeffs_y, [s.target.y for s in samples]),
    ):
        oracle = np.linalg.solve(A.T @ A, A.T @ np.array(targets))
        scale = np.maximum(1.0, np.abs(oracle))
        assert np.all(np.abs(np.asarray(got) - oracle) / scale < 1e-6)
    assert time.perf_counter() - start < 1.0


def test_kalman_correctness():
    start = time.perf_counter()

    # two-step scalar hand oracle: q=0, r=1, p0=1, one 1 s step
    params = FilterParams(q=0.0, r=1.0, p0=1.0, dt_max=1.0)
    state = filter_init(ScreenPoint(0.0, 0.0), 0.0, params)
    state, out = filter_step(state, ScreenPoint(1.0, 1.0), 1000.0)
    assert abs(state.x - 2.0 / 3.0) < 1e-9
    assert abs(state.vx - 1.0 / 3.0) < 1e-9
    p00, p01, p11 = state.cov_x
    assert abs(p00 - 2.0 / 3.0) < 1e-9
    assert abs(p01 - 1.0 / 3.0) < 1e-9
    assert abs(p11 - 2.0 / 3.0) < 1e-9

    # constant input converges to within half a pixel
    params = FilterParams()
    state = filter_init(ScreenPoint(0.0, 0.0), 0.0, params)
    target = ScreenPoint(50.0, -30.0)
    for k in range(1, 90):
        state, out = filter_step(state, target, k * 33.0)
    assert math.hypot(out.x - target.x, out.y - target.y) < 0.5

    # covariance stays symmetric PSD through 1e5 fuzzed steps
    rng = np.random.default_rng(7)
    params = FilterParams(q=30.0, r=20.0, saccade_px=150.0)
    state = filter_init(ScreenPoint(640.0, 360.0), 0.0, params)
    t = 0.0
    for _ in range(100_000):
        t += float(rng.uniform(1.0, 50.0))
        z = ScreenPoint(float(rng.uniform(-200.0, 1500.0)), float(rng.uniform(-200.0, 1000.0)))
        state, _ = filter_step(state, z, t)
        for p00, p01, p11 in (state.cov_x, state.cov_y):
            tr, det = p00 + p11, p00 * p11 - p01 * p01
            eig_min = tr / 2.0 - math.sqrt(max(tr * tr / 4.0 - det, 0.0))
            assert eig_min > -1e-9
    assert time.perf_counter() - start < 10.0


def test_snapping_law():
    # 1e4 random scenes: snapped is the gaze or a box center, containment
    # decides which, ties resolve deterministically, OFF is a passthrough
    rng = np.random.default_rng(11)
    view = ViewMapping()
    for case in range(10_000):
        n = int(rng.integers(0, 5))
        boxes = []
        for b in range(n):
            boxes.append(
                BBox(
                    id=f"b{b}",
                    label=f"b{b}",
                    cx=float(rng.uniform(0, 1280)),
                    cy=float(rng.uniform(0, 720)),
                    w=float(rng.uniform(10, 300)),
                    h=float(rng.uniform(10, 300)),
                )
            )
        frame = DetectionFrame(t=0.0, boxes=tuple(boxes))
        gaze = ScreenPoint(float(rng.uniform(-100, 1380)), float(rng.uniform(-100, 820)))

        got = snap(gaze, frame, view)
        centers = {(b.cx, b.cy) for b in boxes}
        assert (got.snapped.x, got.snapped.y) in centers | {(gaze.x, gaze.y)}

        containing = [b for b in boxes if b.contains(gaze.x, gaze.y)]
        if containing:
            best = min(
                containing,
                key=lambda b: ((b.cx - gaze.x) ** 2 + (b.cy - gaze.y) ** 2, b.area, b.id),
            )
            assert got.is_snapped and got.target_id == best.id
            assert (got.snapped.x, got.snapped.y) == (best.cx, best.cy)
        else:
            assert not got.is_snapped and got.target_id is None
            assert (got.snapped.x, got.snapped.y) == (gaze.x, gaze.y)

        again = snap(gaze, frame, view)
        assert (again.snapped.x, again.snapped.y, again.target_id) == (
            got.snapped.x,
            got.snapped.y,
            got.target_id,
        )

        off = snap_disabled(gaze, frame, view)
        assert (off.snapped.x, off.snapped.y) == (gaze.x, gaze.y)
        assert off.is_snapped is False


def _cursor(target, x=100.0, y=100.0, clear=True):
    p = ScreenPoint(x, y)
    return CursorState(
        raw=p,
        snapped=p,
        target_id=target,
        is_snapped=target is not None,
        target_cam=(x, y) if target is not None else None,
        gaze_cam=(x, y),
        clear_of_boxes=clear and target is None,
    )


def test_dwell_protocol():
    cfg = DwellConfig()

    # the pick fires exactly at since + 3000 when a tick lands there
    state = dwell_init(cfg)
    request = None
    for t in range(0, 3100, 100):
        state, request = dwell_tick(state, _cursor("cup"), float(t))
        if request is not None:
            break
    assert request is not None and request.kind == "pick"
    assert request.issued_at == 3000.0

    # a grace-window excursion survives; one tick longer resets
    for lost_ms, survives in ((150.0, True), (151.0, False)):
        state = dwell_init(cfg)
        state, _ = dwell_tick(state, _cursor("cup"), 0.0)
        state, _ = dwell_tick(state, _cursor(None), 1000.0)
        state, _ = dwell_tick(state, _cursor(None), 1000.0 + lost_ms)
        state, _ = dwell_tick(state, _cursor("cup"), 1000.0 + lost_ms + 1.0)
        expected_since = 0.0 if survives else 1000.0 + lost_ms + 1.0
        assert state.since_ms == expected_since

    # 1e4 fuzzed bursty ticks: strict pick/place alternation, and a place
    # can only ever follow a successful pick
    rng = np.random.default_rng(23)
    state = dwell_init(cfg)
    t = 0.0
    history = []
    fixation_end = 0.0
    cursor = _cursor("cup")
    choices = [_cursor("cup"), _cursor("box", 300.0, 300.0), _cursor(None), _cursor(None, 500.0, 400.0)]
    for _ in range(10_000):
        t += float(rng.uniform(20.0, 60.0))
        if t >= fixation_end:
            cursor = choices[int(rng.integers(0, len(choices)))]
            fixation_end = t + float(rng.uniform(300.0, 4500.0))
        state, request = dwell_tick(state, cursor, t)
        if request is not None:
            history.append(request.kind)
            if request.kind == "pick":
                assert state.phase == Phase.EXECUTING_PICK
                outcome = Outcome.PICK_DONE if rng.uniform() < 0.9 else Outcome.FAILED
                state = on_robot_done(state, outcome)
                if outcome == Outcome.FAILED:
                    history.pop()
            else:
                assert state.phase == Phase.EXECUTING_PLACE
                state = on_robot_done(state, Outcome.PLACE_DONE)
    for i, kind in enumerate(history):
        assert kind == ("pick" if i % 2 == 0 else "place")


def test_geometry_consistency():
    rng = np.random.default_rng(3)

    # noiseless homography recovery within 1e-6
    true_h = np.array([[0.0011, 2e-5, -0.7], [-1e-5, 0.0009, -0.4], [3e-5, -2e-5, 1.0]])
    pairs = []
    for _ in range(12):
        px, py = float(rng.uniform(0, 1280)), float(rng.uniform(0, 720))
        q = true_h @ np.array([px, py, 1.0])
        pairs.append(((px, py), (q[0] / q[2], q[1] / q[2])))
    est = estimate_homography(pairs, z_table=0.0)
    assert np.all(np.abs(est.H - true_h) < 1e-6)
    assert est.reprojection_rms < 1e-6

    # camera ray-plane backprojection agrees with the plane-induced
    # homography within 1e-6 m, and pixel round trips within 1e-6 px
    def rotation(rx, ry, rz):
        cx_, sx = math.cos(rx), math.sin(rx)
        cy_, sy = math.cos(ry), math.sin(ry)
        cz, sz = math.cos(rz), math.sin(rz)
        Rx = np.array([[1, 0, 0], [0, cx_, -sx], [0, sx, cx_]])
        Ry = np.array([[cy_, 0, sy], [0, 1, 0], [-sy, 0, cy_]])
        Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return Rz @ Ry @ Rx

    base = np.array([[1, 0, 0], [0, -1, 0], [0, 0, -1]], dtype=float)
    for trial in range(5):
        R = rotation(*(rng.uniform(-0.25, 0.25, 3))) @ base
        T = np.eye(4)
        T[:3, :3] = R
        T[:3, 3] = [rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.8, 1.4)]
        cam = CameraModel(fx=1000.0, fy=1050.0, cx=640.0, cy=360.0, T_base_camera=T)
        z0 = 0.02
        h = induced_homography(cam, z0)
        for _ in range(20):
            pixel = (float(rng.uniform(200, 1080)), float(rng.uniform(150, 570)))
            via_h = pixel_to_workspace(h, pixel)
            via_ray = backproject_to_plane(cam, pixel, z0)
            assert abs(via_h.x - via_ray.x) < 1e-6
            assert abs(via_h.y - via_ray.y) < 1e-6
            back = workspace_to_pixel(h, via_h)
            assert math.hypot(back[0] - pixel[0], back[1] - pixel[1]) < 1e-6


def _canonical_trace():
    lines = [encode({"type": "tick", "t": 0.0})]
    for k in range(1, 400):
        t = k * 1000.0 / 30.0
        if k <= 100:
            u, v = 300.0 / 1280.0, 200.0 / 720.0  # cup box center
        else:
            u, v = 1000.0 / 1280.0, 600.0 / 720.0  # empty table
        lines.append(encode({"type": "gaze", "t": t, "u": u, "v": v}))
        if k % 30 == 0:
            lines.append(encode({"type": "tick", "t": t}))
    for k in range(1, 40):
        lines.append(encode({"type": "tick", "t": 13300.0 + k * 250.0}))
    return lines


def test_end_to_end_determinism():
    trace = _canonical_trace()

    def fresh():
        return Session(sid="gate", model=identity_model(1280.0, 720.0))

    first = replay(trace, fresh())
    second = replay(trace, fresh())
    assert "\n".join(first) == "\n".join(second)

    messages = [json.loads(l) for l in first]
    picks = [m for m in messages if m["type"] == "robot_event" and m["event"] == "pick_dispatched"]
    places = [m for m in messages if m["type"] == "robot_event" and m["event"] == "place_dispatched"]
    assert len(picks) == 1 and len(places) == 1

    h = default_homography()
    frame = next(m for m in messages if m["type"] == "frame")
    cup = next(b for b in frame["boxes"] if b["id"] == "cup")
    expect_pick = pixel_to_workspace(h, (cup["cx"], cup["cy"]))
    assert picks[0]["payload"]["object_id"] == "cup"
    assert picks[0]["payload"]["target"] == [expect_pick.x, expect_pick.y, expect_pick.z]

    px = places[0]["payload"]["pixel"]
    expect_place = pixel_to_workspace(h, (px[0], px[1]))
    assert places[0]["payload"]["target"] == [expect_place.x, expect_place.y, expect_place.z]
    nominal = pixel_to_workspace(h, (1000.0, 600.0))
    assert math.hypot(expect_place.x - nominal.x, expect_place.y - nominal.y) < 0.005


def test_anova_fidelity():
    rng = np.random.default_rng(4)
    a = list(rng.normal(6.77, 0.9, 13))
    b = list(rng.normal(4.65, 0.8, 13))

    # brute-force sums of squares, one-way layout
    grand = np.mean(a + b)
    ss_between = 13 * ((np.mean(a) - grand) ** 2 + (np.mean(b) - grand) ** 2)
    ss_within = sum((x - np.mean(a)) ** 2 for x in a) + sum((x - np.mean(b)) ** 2 for x in b)
    f_oracle = (ss_between / 1.0) / (ss_within / 24.0)
    got = one_way_anova([a, b])
    assert (got.df1, got.df2) == (1, 24)
    assert abs(got.F - f_oracle) < 1e-9 * max(1.0, abs(f_oracle))

    # brute-force partitioned sums of squares, repeated-measures layout
    table = np.column_stack([a, b])
    n, k = table.shape
    grand = table.mean()
    ss_cond = n * np.sum((table.mean(axis=0) - grand) ** 2)
    ss_subj = k * np.sum((table.mean(axis=1) - grand) ** 2)
    ss_total = np.sum((table - grand) ** 2)
    ss_err = ss_total - ss_cond - ss_subj
    f_rm_oracle = (ss_cond / (k - 1)) / (ss_err / ((k - 1) * (n - 1)))
    got_rm = repeated_measures_anova([list(row) for row in table])
    assert (got_rm.df1, got_rm.df2) == (1, 12)
    assert abs(got_rm.F - f_rm_oracle) < 1e-9 * max(1.0, abs(f_rm_oracle))

    # the 5% critical point of F(1, 24) sits at 4.26
    assert abs(f_sf(4.26, 1, 24) - 0.05) < 2e-3


def test_experiment_direction():
    start = time.perf_counter()
    for seed in range(20):
        report = summarize_experiment(run_experiment(n_participants=13, n_trials=40, seed=seed))
        assert report.mean_ms["ON"] < report.mean_ms["OFF"], f"seed {seed}"
    assert improvement_fraction(6.77, 4.65) == pytest.approx(0.313, abs=5e-4)
    assert time.perf_counter() - start < 120.0
