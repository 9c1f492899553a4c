"""Wire protocol, calibration walkthrough, end-to-end replay determinism."""

import json

import pytest

from gazepick.calibration import calibration_point_layout, load_model, save_model
from gazepick.config import AppConfig, SimConfig, default_homography
from gazepick.geometry import pixel_to_workspace
from gazepick.session import (
    Session,
    dump_log,
    encode,
    identity_model,
    replay,
)

W, H = 1280.0, 720.0
TICK = 1000.0 / 30.0


def make_session(sid="s1", model="identity", config=None):
    m = identity_model(W, H) if model == "identity" else model
    return Session(sid=sid, config=config, model=m)


def gaze_line(t, x, y):
    """A gaze sample that the identity model maps to screen (x, y)."""
    return encode({"type": "gaze", "t": t, "u": x / W, "v": y / H})


def feed(session, lines):
    out = []
    for line in lines:
        out.extend(session.handle_line(line))
    return [json.loads(l) for l in out]


def of_type(messages, kind):
    return [m for m in messages if m["type"] == kind]


def events(messages, name):
    return [m for m in messages if m["type"] == "robot_event" and m["event"] == name]


def canonical_trace():
    """Fixate the cup 3 s, then an empty spot until pick and place finish."""
    lines = [encode({"type": "tick", "t": 0.0})]
    for k in range(1, 400):
        t = k * TICK
        if k <= 100:
            x, y = 300.0, 200.0  # cup box center in the packaged scene
        else:
            x, y = 1000.0, 600.0  # empty table
        lines.append(gaze_line(t, x, y))
        if k % 30 == 0:
            lines.append(encode({"type": "tick", "t": t}))
    for k in range(1, 40):
        lines.append(encode({"type": "tick", "t": 13300.0 + k * 250.0}))
    return lines


class TestProtocolBasics:
    def test_malformed_json_is_an_error_not_a_crash(self):
        s = make_session()
        msgs = feed(s, ["{not json", encode({"type": "tick", "t": 1.0})])
        assert msgs[0]["type"] == "error" and msgs[0]["code"] == "bad_message"
        assert of_type(msgs, "state"), "session keeps serving after a bad line"

    def test_non_object_rejected(self):
        s = make_session()
        (msg,) = feed(s, ["[1,2,3]"])
        assert msg["code"] == "bad_message"

    def test_missing_timestamp_rejected(self):
        s = make_session()
        (msg,) = feed(s, [encode({"type": "tick"})])
        assert msg["code"] == "bad_message"

    def test_unknown_type_rejected(self):
        s = make_session()
        (msg,) = feed(s, [encode({"type": "video", "t": 1.0})])
        assert msg["code"] == "bad_message"

    def test_session_id_mismatch_rejected(self):
        s = make_session(sid="alpha")
        (msg,) = feed(s, [encode({"type": "tick", "t": 1.0, "sid": "beta"})])
        assert msg["code"] == "bad_message"
        out = feed(s, [encode({"type": "tick", "t": 2.0, "sid": "alpha"})])
        assert of_type(out, "state")

    def test_blank_lines_ignored(self):
        s = make_session()
        assert s.handle_line("") == []
        assert s.handle_line("   \n") == []

    def test_every_outbound_message_tagged(self):
        s = make_session(sid="tagme")
        msgs = feed(s, canonical_trace()[:200])
        assert msgs
        for m in msgs:
            assert m["sid"] == "tagme"
            assert isinstance(m["t"], (int, float))

    def test_tick_only_input_yields_heartbeat_only(self):
        s = make_session()
        msgs = feed(s, [encode({"type": "tick", "t": k * 100.0}) for k in range(1, 20)])
        kinds = {m["type"] for m in msgs}
        assert "state" in kinds
        assert kinds <= {"state", "frame"}
        # the scene is static, so the detector view is published once
        assert len(of_type(msgs, "frame")) == 1


class TestCalibrationGate:
    def test_gaze_before_model_warns_once(self):
        s = Session(sid="raw")
        msgs = feed(s, [gaze_line(k * TICK, 100, 100) for k in range(1, 10)])
        errors = of_type(msgs, "error")
        assert len(errors) == 1
        assert errors[0]["code"] == "not_calibrated"
        assert not of_type(msgs, "cursor")

    def test_warning_rearms_after_reset(self):
        s = Session(sid="raw")
        feed(s, [gaze_line(10.0, 100, 100)])
        feed(s, [encode({"type": "control", "t": 20.0, "command": "reset", "args": {}})])
        msgs = feed(s, [gaze_line(30.0, 100, 100)])
        assert of_type(msgs, "error")


def run_walkthrough(session, n_points, t0=0.0, true_map=None):
    """Drive a full calibration; returns (all outbound, last t used)."""
    if true_map is None:
        true_map = lambda x, y: (x / W, y / H)
    out = feed(
        session,
        [encode({"type": "control", "t": t0, "command": "start_calibration", "args": {"points": n_points}})],
    )
    t = t0
    for _ in range(n_points):
        points = of_type(out, "calib_point")
        assert points, f"expected a calib_point prompt, got {out}"
        shown = points[-1]
        samples = []
        for k in range(15):
            t += 60.0
            u, v = true_map(shown["x"], shown["y"])
            samples.append(encode({"type": "gaze", "t": t, "u": u, "v": v}))
        t += 10.0
        samples.append(encode({"type": "control", "t": t, "command": "calib_point_ack", "args": {}}))
        out = feed(session, samples)
    return out, t


class TestCalibrationWalkthrough:
    def test_prompts_follow_the_layout(self):
        s = Session(sid="c")
        msgs = feed(
            s,
            [encode({"type": "control", "t": 5.0, "command": "start_calibration", "args": {"points": 12}})],
        )
        (prompt,) = of_type(msgs, "calib_point")
        expect = calibration_point_layout(12, W, H)[0]
        assert prompt["index"] == 0 and prompt["total"] == 12
        assert prompt["x"] == expect.x and prompt["y"] == expect.y

    def test_ground_truth_producer_fits_below_half_pixel(self):
        s = Session(sid="c")
        out, t = run_walkthrough(s, 35)
        (done,) = of_type(out, "calib_done")
        assert done["points"] == 35
        assert done["residual_rms"] < 0.5
        assert s.model is not None
        # gaze flows through the freshly fitted model afterwards
        msgs = feed(s, [gaze_line(t + 50.0, 640, 360)])
        (cursor,) = of_type(msgs, "cursor")
        assert cursor["raw"][0] == pytest.approx(640, abs=1.0)

    def test_fitted_model_round_trips_bit_exactly(self, tmp_path):
        s = Session(sid="c")
        run_walkthrough(s, 35)
        path = tmp_path / "model.json"
        save_model(s.model, str(path))
        again = load_model(str(path))
        assert list(again.coeffs_x) == list(s.model.coeffs_x)
        assert list(again.coeffs_y) == list(s.model.coeffs_y)

    def test_ack_without_settled_samples_repeats_the_point(self):
        s = Session(sid="c")
        feed(s, [encode({"type": "control", "t": 0.0, "command": "start_calibration", "args": {"points": 4}})])
        # samples inside the settling window do not count
        msgs = feed(
            s,
            [
                encode({"type": "gaze", "t": 100.0, "u": 0.1, "v": 0.1}),
                encode({"type": "control", "t": 200.0, "command": "calib_point_ack", "args": {}}),
            ],
        )
        errors = of_type(msgs, "error")
        assert errors and errors[0]["code"] == "calibration"
        assert s.calibrating is not None and s.calibrating.index == 0

    def test_ack_outside_walkthrough_is_an_error(self):
        s = make_session()
        (msg,) = feed(s, [encode({"type": "control", "t": 1.0, "command": "calib_point_ack", "args": {}})])
        assert msg["code"] == "calibration"

    def test_abort_preserves_prior_model(self):
        s = make_session()
        before = s.model
        feed(s, [encode({"type": "control", "t": 0.0, "command": "start_calibration", "args": {"points": 35}})])
        # two points in, then abort
        run = s.calibrating
        assert run is not None
        feed(s, [encode({"type": "gaze", "t": 700.0, "u": 0.2, "v": 0.2})])
        feed(s, [encode({"type": "control", "t": 800.0, "command": "calib_point_ack", "args": {}})])
        feed(s, [encode({"type": "control", "t": 900.0, "command": "abort_calibration", "args": {}})])
        assert s.calibrating is None
        assert s.model is before

    def test_gaze_during_walkthrough_feeds_collection_not_cursor(self):
        s = make_session()
        feed(s, [encode({"type": "control", "t": 0.0, "command": "start_calibration", "args": {"points": 4}})])
        msgs = feed(s, [encode({"type": "gaze", "t": 600.0, "u": 0.5, "v": 0.5})])
        assert not of_type(msgs, "cursor")
        assert len(s.calibrating.samples) == 1


@pytest.fixture(scope="module")
def transcript():
    s = make_session(sid="e2e")
    msgs = feed(s, canonical_trace())
    return s, msgs


class TestEndToEnd:
    def test_exactly_one_pick_at_the_cup(self, transcript):
        s, msgs = transcript
        picks = events(msgs, "pick_dispatched")
        assert len(picks) == 1
        assert picks[0]["payload"]["object_id"] == "cup"

    def test_pick_target_is_backprojected_box_center(self, transcript):
        s, msgs = transcript
        (pick,) = events(msgs, "pick_dispatched")
        px = pick["payload"]["pixel"]
        expect = pixel_to_workspace(default_homography(), (px[0], px[1]))
        assert pick["payload"]["target"] == [expect.x, expect.y, expect.z]
        # and that pixel is the cup's detected center
        frame = of_type(msgs, "frame")[0]
        cup = next(b for b in frame["boxes"] if b["id"] == "cup")
        assert px == [cup["cx"], cup["cy"]]

    def test_exactly_one_place_near_the_empty_spot(self, transcript):
        s, msgs = transcript
        places = events(msgs, "place_dispatched")
        assert len(places) == 1
        target = places[0]["payload"]["target"]
        expect = pixel_to_workspace(default_homography(), (1000.0, 600.0))
        # the anchor is the smoothed gaze, so a small filter-lag offset remains
        assert abs(target[0] - expect.x) < 0.005
        assert abs(target[1] - expect.y) < 0.005

    def test_scene_object_actually_moved(self, transcript):
        s, msgs = transcript
        (place,) = events(msgs, "place_dispatched")
        tx, ty, tz = place["payload"]["target"]
        cup = s.scene.objects["cup"]
        assert (cup.pose.x, cup.pose.y, cup.pose.z) == (tx, ty, tz)
        assert s.robot.held is None

    def test_no_errors_in_the_scripted_run(self, transcript):
        s, msgs = transcript
        assert of_type(msgs, "error") == []

    def test_robot_event_times_are_absolute_and_ordered(self, transcript):
        s, msgs = transcript
        robot = [m for m in msgs if m["type"] == "robot_event"]
        times = [m["t"] for m in robot]
        assert times == sorted(times)
        (pick,) = events(msgs, "pick_dispatched")
        (done,) = events(msgs, "pick_done")
        # two long travel legs plus two clearance hops, at 0.25 m/s
        assert done["t"] > pick["t"] + 3000.0

    def test_cursor_timestamps_monotone(self, transcript):
        s, msgs = transcript
        ts = [m["t"] for m in of_type(msgs, "cursor")]
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_frames_published_only_on_change(self, transcript):
        s, msgs = transcript
        frames = of_type(msgs, "frame")
        # initial view, cup vanishing into the gripper, cup reappearing
        assert len(frames) == 3
        ids = [sorted(b["id"] for b in f["boxes"]) for f in frames]
        assert "cup" in ids[0] and "cup" not in ids[1] and "cup" in ids[2]


class TestDeterminism:
    def test_replay_is_byte_identical(self):
        trace = canonical_trace()
        a = replay(trace, make_session(sid="r"))
        b = replay(trace, make_session(sid="r"))
        assert "\n".join(a) == "\n".join(b)

    def test_replay_matches_live_transcript(self):
        trace = canonical_trace()
        live = make_session(sid="r")
        live_out = []
        for line in trace:
            live_out.extend(live.handle_line(line))
        assert replay(trace, make_session(sid="r")) == live_out

    def test_combined_log_replays_as_is(self):
        s = make_session(sid="r")
        for line in canonical_trace():
            s.handle_line(line)
        log_text = dump_log(s)
        outbound_logged = [line[4:] for line in log_text.splitlines() if line.startswith("out ")]
        again = replay(log_text.splitlines(), make_session(sid="r"))
        assert again == outbound_logged


class TestSnappingToggle:
    def test_toggle_changes_cursor_behavior(self):
        s = make_session()
        # let a self-produced frame arrive, then hover near the cup center
        feed(s, [encode({"type": "tick", "t": 1.0})])
        msgs = feed(s, [gaze_line(10.0, 310.0, 205.0)])
        (cursor,) = of_type(msgs, "cursor")
        assert cursor["is_snapped"] is True
        assert cursor["snapped"] == [300.0, pytest.approx(200.0)]
        off = feed(s, [encode({"type": "control", "t": 20.0, "command": "set_snapping", "args": {"enabled": False}})])
        assert of_type(off, "state")[0]["snap_enabled"] is False
        msgs = feed(s, [gaze_line(30.0, 310.0, 205.0)])
        (cursor,) = of_type(msgs, "cursor")
        assert cursor["is_snapped"] is False
        assert cursor["target_id"] == "cup"
        assert cursor["snapped"] != [300.0, 200.0]

    def test_bad_toggle_args_rejected(self):
        s = make_session()
        (msg,) = feed(s, [encode({"type": "control", "t": 1.0, "command": "set_snapping", "args": {"enabled": "yes"}})])
        assert msg["code"] == "bad_message"


class TestFrames:
    def test_external_frame_takes_over(self):
        s = make_session()
        feed(s, [encode({"type": "tick", "t": 1.0})])
        feed(
            s,
            [
                encode(
                    {
                        "type": "frame",
                        "t": 2.0,
                        "boxes": [{"id": "brick", "cx": 500.0, "cy": 300.0, "w": 60.0, "h": 60.0}],
                    }
                )
            ],
        )
        msgs = feed(s, [encode({"type": "tick", "t": 3.0}), gaze_line(4.0, 505.0, 295.0)])
        assert not of_type(msgs, "frame"), "self-produced frames stop"
        (cursor,) = of_type(msgs, "cursor")
        assert cursor["target_id"] == "brick"

    def test_stale_frame_rejected(self):
        s = make_session()
        frame = {"type": "frame", "t": 100.0, "boxes": []}
        feed(s, [encode(frame)])
        (msg,) = feed(s, [encode({**frame, "t": 50.0})])
        assert msg["code"] == "stale_frame"

    def test_malformed_boxes_rejected(self):
        s = make_session()
        (msg,) = feed(
            s,
            [encode({"type": "frame", "t": 1.0, "boxes": [{"id": "x", "cx": 1.0}]})],
        )
        assert msg["code"] == "bad_message"

    def test_box_identity_inherited_across_renames(self):
        s = make_session()
        feed(
            s,
            [
                encode(
                    {
                        "type": "frame",
                        "t": 1.0,
                        "boxes": [{"id": "a", "cx": 400.0, "cy": 300.0, "w": 80.0, "h": 80.0}],
                    }
                ),
                encode(
                    {
                        "type": "frame",
                        "t": 2.0,
                        "boxes": [{"id": "b", "cx": 404.0, "cy": 302.0, "w": 80.0, "h": 80.0}],
                    }
                ),
            ],
        )
        msgs = feed(s, [gaze_line(3.0, 402.0, 300.0)])
        (cursor,) = of_type(msgs, "cursor")
        assert cursor["target_id"] == "a"


class TestDispatchFailures:
    def test_pick_of_phantom_object_recovers(self):
        s = make_session()
        feed(
            s,
            [
                encode(
                    {
                        "type": "frame",
                        "t": 1.0,
                        "boxes": [{"id": "ghost", "cx": 640.0, "cy": 360.0, "w": 100.0, "h": 100.0}],
                    }
                )
            ],
        )
        lines = [gaze_line(k * TICK, 640.0, 360.0) for k in range(1, 120)]
        msgs = feed(s, lines)
        errors = of_type(msgs, "error")
        assert errors and errors[0]["code"] == "robot"
        assert not events(msgs, "pick_dispatched")
        # the gaze is still parked on the phantom, so the timer re-arms;
        # what matters is that nothing is stuck executing
        assert s.dwell.phase.value in ("idle", "hover_object")
        assert not s.robot.busy
        assert of_type(feed(s, [encode({"type": "tick", "t": 9000.0})]), "state")

    def test_grasp_failure_returns_to_idle(self):
        config = AppConfig(sim=SimConfig(fail_rate=1.0))
        s = make_session(config=config)
        msgs = feed(s, canonical_trace())
        assert events(msgs, "grasp_failed")
        assert events(msgs, "failed")
        assert not events(msgs, "place_dispatched")
        assert s.robot.held is None


class TestIsolation:
    def test_interleaved_sessions_match_solo_runs(self):
        trace = canonical_trace()
        solo_on = replay(trace, make_session(sid="x"))
        config_off = AppConfig(snap=type(AppConfig().snap)(enabled=False, hysteresis=0.10))
        solo_off = replay(trace, Session(sid="y", config=config_off, model=identity_model(W, H)))

        a = make_session(sid="x")
        b = Session(sid="y", config=config_off, model=identity_model(W, H))
        got_a, got_b = [], []
        for line in trace:
            got_a.extend(a.handle_line(line))
            got_b.extend(b.handle_line(line))
        assert got_a == solo_on
        assert got_b == solo_off
        assert solo_on != solo_off

    def test_logs_are_disjoint_objects(self):
        a, b = make_session(sid="a"), make_session(sid="b")
        a.handle_line(encode({"type": "tick", "t": 1.0}))
        assert b.log == []


class TestSceneSwap:
    def test_load_scene_command(self, tmp_path):
        from gazepick.robot import save_scene

        s = make_session()
        save_scene(s.scene, str(tmp_path / "alt.json"))
        msgs = feed(
            s,
            [
                encode(
                    {
                        "type": "control",
                        "t": 1.0,
                        "command": "load_scene",
                        "args": {"path": str(tmp_path / "alt.json")},
                    }
                )
            ],
        )
        assert of_type(msgs, "state")

    def test_load_scene_missing_file(self):
        s = make_session()
        (msg,) = feed(
            s,
            [encode({"type": "control", "t": 1.0, "command": "load_scene", "args": {"path": "/nope.json"}})],
        )
        assert msg["code"] == "bad_message"
