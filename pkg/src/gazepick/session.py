"""Pipeline orchestrator speaking a line-delimited JSON protocol.

One Session owns the full per-connection pipeline state: calibration
model, smoothing filter, snap mode, dwell machine, workspace geometry,
and the simulated robot with its scene. It consumes inbound messages one
line at a time and returns the outbound lines they produce. All state
evolution is driven by message timestamps; nothing reads a wall clock,
so feeding the same inbound log to a fresh session reproduces the
outbound transcript byte for byte.

Wire format: UTF-8 lines, one JSON object per line, tagged by "type".
Timestamps t are producer-side milliseconds and never re-stamped.

Inbound:
  {"type":"gaze","t":ms,"u":f,"v":f}            raw iris sample
  {"type":"frame","t":ms,"boxes":[{"id","label","cx","cy","w","h"}]}
                                                detector output, camera px
  {"type":"tick","t":ms}                        pacing: advance sim, heartbeat
  {"type":"control","t":ms,"command":c,"args":{...}}
    commands: start_calibration {points}, calib_point_ack,
    abort_calibration, set_snapping {enabled}, load_scene {path}, reset

Outbound (all carry "sid"):
  {"type":"cursor","t","raw":[x,y],"snapped":[x,y],"target_id",
   "is_snapped","dwell_progress"}               per gaze sample
  {"type":"frame",...}                          scene-derived detections,
                                                emitted on ticks until an
                                                external frame arrives
  {"type":"state","t","phase","held","robot","snap_enabled","calibrated"}
  {"type":"robot_event","t","event","payload"}  dispatches + sim waypoints
  {"type":"calib_point","t","index","total","x","y"}
  {"type":"calib_done","t","residual_rms","points"}
  {"type":"error","t","code","message"}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .calibration import (
    CalibrationError,
    CalibrationModel,
    CalibrationSample,
    IrisPoint,
    ScreenPoint,
    calibration_point_layout,
    fit_calibration,
    map_gaze,
)
from .config import AppConfig, default_bounds, default_home, default_homography, default_scene, load_config
from .dwell import InteractionState, Outcome, Phase, RobotRequest, dwell_init, dwell_tick, on_robot_done
from .geometry import GeometryError, Homography, pixel_to_workspace
from .robot import RobotError, Scene, SimObject, SimRobot, detector_frame, load_scene, sim_tick
from .smoothing import FilterState, NonMonotonicTime, filter_init, filter_step
from .workspace import BBox, DetectionFrame, StaleFrame, snap, snap_disabled, update_frame

# live calibration: per point, average the last POINT_SAMPLES gaze samples
# received more than SETTLE_MS after the point appeared
SETTLE_MS = 500.0
POINT_SAMPLES = 10

DEFAULT_CALIB_POINTS = 35

TERMINAL_EVENTS = {
    "pick_done": Outcome.PICK_DONE,
    "place_done": Outcome.PLACE_DONE,
    "failed": Outcome.FAILED,
}


def encode(msg: dict) -> str:
    """Canonical line encoding: sorted keys, no whitespace."""
    return json.dumps(msg, sort_keys=True, separators=(",", ":"))


def identity_model(width: float, height: float) -> CalibrationModel:
    """A model mapping normalized iris (u, v) in [0,1] to the full screen.

    Fit on an exact grid of the linear map, which a cubic recovers to
    machine precision; gives demo producers a working mapping without a
    calibration pass.
    """
    samples = []
    for i in range(6):
        for j in range(6):
            u, v = i / 5.0, j / 5.0
            samples.append(
                CalibrationSample(IrisPoint(u, v), ScreenPoint(u * width, v * height))
            )
    return fit_calibration(samples, fitted_at=0.0)


@dataclass
class _CalibrationRun:
    """Walkthrough progress: shown point index and the samples behind it."""

    points: list[ScreenPoint]
    index: int = 0
    shown_at: float = 0.0
    samples: list[tuple[float, float, float]] = field(default_factory=list)
    collected: list[CalibrationSample] = field(default_factory=list)


class Session:
    """Single-owner pipeline state; feed messages via handle_line/handle."""

    def __init__(
        self,
        sid: str,
        config: AppConfig | None = None,
        model: CalibrationModel | None = None,
        homography: Homography | None = None,
        scene: Scene | None = None,
    ) -> None:
        self.sid = sid
        self.config = config or load_config()
        self.model = model
        self.homography = homography or default_homography()
        self.snap_enabled = self.config.snap.enabled
        self._initial_scene = scene or default_scene()
        self.scene = _copy_scene(self._initial_scene)
        self.robot = self._new_robot()
        self.filter: FilterState | None = None
        self.dwell: InteractionState = dwell_init(self.config.dwell)
        self.frame: DetectionFrame | None = None
        self.clock_ms = 0.0
        self.log: list[tuple[str, str]] = []
        self.calibrating: _CalibrationRun | None = None
        self._frame_is_external = False
        self._last_emitted_boxes: tuple | None = None
        self._warned_uncalibrated = False
        self._prev_target: str | None = None

    def _new_robot(self) -> SimRobot:
        sim = self.config.sim
        return SimRobot(
            home=default_home(),
            bounds=default_bounds(),
            speed_mps=sim.speed_mps,
            clearance_m=sim.clearance_m,
            fail_rate=sim.fail_rate,
            seed=sim.seed,
        )

    # -- wire entry points ------------------------------------------------

    def handle_line(self, line: str) -> list[str]:
        line = line.rstrip("\n")
        if not line.strip():
            return []
        self.log.append(("in", line))
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            out = [self._error(self.clock_ms, "bad_message", f"not valid JSON: {exc.msg}")]
        else:
            out = self.handle(msg)
        lines = [encode(m) for m in out]
        for encoded in lines:
            self.log.append(("out", encoded))
        return lines

    def handle(self, msg) -> list[dict]:
        if not isinstance(msg, dict):
            return [self._error(self.clock_ms, "bad_message", "message must be an object")]
        kind = msg.get("type")
        t = msg.get("t")
        if not isinstance(t, (int, float)):
            return [self._error(self.clock_ms, "bad_message", "missing numeric field t")]
        t = float(t)
        sid = msg.get("sid")
        if sid is not None and sid != self.sid:
            return [self._error(t, "bad_message", f"message for session {sid!r}")]

        out: list[dict] = []
        self._advance_time(t, out)
        if kind == "gaze":
            self._on_gaze(msg, t, out)
        elif kind == "frame":
            self._on_frame(msg, t, out)
        elif kind == "tick":
            self._on_tick(t, out)
        elif kind == "control":
            self._on_control(msg, t, out)
        else:
            out.append(self._error(t, "bad_message", f"unknown message type {kind!r}"))
        return out

    # -- time -------------------------------------------------------------

    def _advance_time(self, t: float, out: list[dict]) -> None:
        """Run the robot simulation up to t; deliver completions to dwell."""
        dt = t - self.clock_ms
        if dt <= 0.0:
            return
        self.clock_ms = t
        for event in sim_tick(self.robot, dt, self.scene):
            out.append(
                {
                    "type": "robot_event",
                    "sid": self.sid,
                    "t": event.t,
                    "event": event.kind,
                    "payload": event.payload,
                }
            )
            outcome = TERMINAL_EVENTS.get(event.kind)
            if outcome is not None:
                self.dwell = on_robot_done(self.dwell, outcome)
                out.append(self._state(event.t))

    # -- inbound handlers ---------------------------------------------------

    def _on_gaze(self, msg: dict, t: float, out: list[dict]) -> None:
        u, v = msg.get("u"), msg.get("v")
        if not isinstance(u, (int, float)) or not isinstance(v, (int, float)):
            out.append(self._error(t, "bad_message", "gaze needs numeric u and v"))
            return
        if self.calibrating is not None:
            self.calibrating.samples.append((t, float(u), float(v)))
            return
        if self.model is None:
            if not self._warned_uncalibrated:
                self._warned_uncalibrated = True
                out.append(
                    self._error(t, "not_calibrated", "gaze before calibration; run start_calibration")
                )
            return
        raw = map_gaze(self.model, IrisPoint(float(u), float(v)))
        if self.filter is None:
            self.filter = filter_init(raw, t, self.config.filter)
            smoothed = raw
        else:
            try:
                self.filter, smoothed = filter_step(self.filter, raw, t)
            except NonMonotonicTime as exc:
                out.append(self._error(t, "bad_message", str(exc)))
                return
        frame = self.frame or DetectionFrame(t=t, boxes=())
        snap_fn = snap if self.snap_enabled else snap_disabled
        cursor = snap_fn(smoothed, frame, self.config.view, self._prev_target, self.config.snap.hysteresis)
        self._prev_target = cursor.target_id
        self.dwell, request = dwell_tick(self.dwell, cursor, t)
        out.append(
            {
                "type": "cursor",
                "sid": self.sid,
                "t": t,
                "raw": [smoothed.x, smoothed.y],
                "snapped": [cursor.snapped.x, cursor.snapped.y],
                "target_id": cursor.target_id,
                "is_snapped": cursor.is_snapped,
                "dwell_progress": self.dwell.progress,
            }
        )
        if request is not None:
            self._dispatch(request, out)

    def _on_frame(self, msg: dict, t: float, out: list[dict]) -> None:
        raw_boxes = msg.get("boxes")
        if not isinstance(raw_boxes, list):
            out.append(self._error(t, "bad_message", "frame needs a boxes list"))
            return
        try:
            boxes = tuple(
                BBox(
                    id=str(b["id"]),
                    label=str(b.get("label", b["id"])),
                    cx=float(b["cx"]),
                    cy=float(b["cy"]),
                    w=float(b["w"]),
                    h=float(b["h"]),
                )
                for b in raw_boxes
            )
            incoming = DetectionFrame(t=t, boxes=boxes)
        except (KeyError, TypeError, ValueError) as exc:
            out.append(self._error(t, "bad_message", f"bad frame: {exc}"))
            return
        try:
            self.frame = update_frame(self.frame, incoming)
        except StaleFrame as exc:
            out.append(self._error(t, "stale_frame", str(exc)))
            return
        self._frame_is_external = True

    def _on_tick(self, t: float, out: list[dict]) -> None:
        if not self._frame_is_external:
            incoming = detector_frame(self.scene, self.homography, t)
            if self.frame is None or incoming.t >= self.frame.t:
                self.frame = update_frame(self.frame, incoming)
                boxes = tuple(
                    (b.id, b.label, b.cx, b.cy, b.w, b.h) for b in self.frame.boxes
                )
                # scene frames repeat while nothing moves; publish changes only
                if boxes != self._last_emitted_boxes:
                    self._last_emitted_boxes = boxes
                    out.append(
                        {
                            "type": "frame",
                            "sid": self.sid,
                            "t": t,
                            "boxes": [
                                {"id": b.id, "label": b.label, "cx": b.cx, "cy": b.cy, "w": b.w, "h": b.h}
                                for b in self.frame.boxes
                            ],
                        }
                    )
        out.append(self._state(t))

    def _on_control(self, msg: dict, t: float, out: list[dict]) -> None:
        command = msg.get("command")
        args = msg.get("args") or {}
        if not isinstance(args, dict):
            out.append(self._error(t, "bad_message", "control args must be an object"))
            return
        if command == "set_snapping":
            enabled = args.get("enabled")
            if not isinstance(enabled, bool):
                out.append(self._error(t, "bad_message", "set_snapping needs boolean enabled"))
                return
            self.snap_enabled = enabled
            out.append(self._state(t))
        elif command == "start_calibration":
            n = args.get("points", DEFAULT_CALIB_POINTS)
            if not isinstance(n, int) or n < 1:
                out.append(self._error(t, "bad_message", "points must be a positive integer"))
                return
            screen = self.config.screen
            try:
                layout = calibration_point_layout(n, screen.w, screen.h)
            except CalibrationError as exc:
                out.append(self._error(t, "calibration", str(exc)))
                return
            self.calibrating = _CalibrationRun(points=layout, shown_at=t)
            out.append(self._calib_point(t))
        elif command == "calib_point_ack":
            self._on_calib_ack(t, out)
        elif command == "abort_calibration":
            self.calibrating = None
            out.append(self._state(t))
        elif command == "load_scene":
            path = args.get("path")
            if not isinstance(path, str):
                out.append(self._error(t, "bad_message", "load_scene needs a path"))
                return
            if self.robot.busy:
                out.append(self._error(t, "robot", "cannot swap scenes while the robot is moving"))
                return
            try:
                self._initial_scene = load_scene(path)
            except (OSError, ValueError) as exc:
                out.append(self._error(t, "bad_message", f"cannot load scene: {exc}"))
                return
            self.scene = _copy_scene(self._initial_scene)
            self.robot = self._new_robot()
            self.dwell = dwell_init(self.config.dwell)
            self.frame = None
            self._frame_is_external = False
            self._last_emitted_boxes = None
            self._prev_target = None
            out.append(self._state(t))
        elif command == "reset":
            self.scene = _copy_scene(self._initial_scene)
            self.robot = self._new_robot()
            self.dwell = dwell_init(self.config.dwell)
            self.filter = None
            self.frame = None
            self.calibrating = None
            self._frame_is_external = False
            self._last_emitted_boxes = None
            self._warned_uncalibrated = False
            self._prev_target = None
            out.append(self._state(t))
        else:
            out.append(self._error(t, "bad_message", f"unknown command {command!r}"))

    def _on_calib_ack(self, t: float, out: list[dict]) -> None:
        run = self.calibrating
        if run is None:
            out.append(self._error(t, "calibration", "no calibration in progress"))
            return
        settled = [s for s in run.samples if s[0] > run.shown_at + SETTLE_MS]
        usable = settled[-POINT_SAMPLES:]
        if not usable:
            out.append(
                self._error(
                    t, "calibration", f"no gaze samples after the {SETTLE_MS:.0f} ms settling window"
                )
            )
            return
        mean_u = sum(s[1] for s in usable) / len(usable)
        mean_v = sum(s[2] for s in usable) / len(usable)
        run.collected.append(
            CalibrationSample(IrisPoint(mean_u, mean_v), run.points[run.index])
        )
        run.index += 1
        run.samples.clear()
        run.shown_at = t
        if run.index < len(run.points):
            out.append(self._calib_point(t))
            return
        try:
            model = fit_calibration(run.collected, fitted_at=t)
        except CalibrationError as exc:
            self.calibrating = None
            out.append(self._error(t, "calibration", f"fit failed: {exc}"))
            return
        self.model = model
        self.calibrating = None
        self.filter = None
        self._warned_uncalibrated = False
        out.append(
            {
                "type": "calib_done",
                "sid": self.sid,
                "t": t,
                "residual_rms": model.residual_rms,
                "points": len(run.points),
            }
        )

    # -- dispatch -----------------------------------------------------------

    def _dispatch(self, request: RobotRequest, out: list[dict]) -> None:
        try:
            target = pixel_to_workspace(self.homography, request.pixel)
        except GeometryError as exc:
            out.append(self._error(request.issued_at, "geometry", str(exc)))
            self.dwell = on_robot_done(self.dwell, Outcome.FAILED)
            return
        try:
            if request.kind == "pick":
                assert request.object_id is not None
                self.robot.execute_pick(target, request.object_id, self.scene)
            else:
                self.robot.execute_place(target)
        except RobotError as exc:
            out.append(self._error(request.issued_at, "robot", str(exc)))
            self.dwell = on_robot_done(self.dwell, Outcome.FAILED)
            return
        out.append(
            {
                "type": "robot_event",
                "sid": self.sid,
                "t": request.issued_at,
                "event": f"{request.kind}_dispatched",
                "payload": {
                    "object_id": request.object_id,
                    "target": [target.x, target.y, target.z],
                    "pixel": list(request.pixel),
                },
            }
        )
        out.append(self._state(request.issued_at))

    # -- outbound builders ----------------------------------------------------

    def _state(self, t: float) -> dict:
        return {
            "type": "state",
            "sid": self.sid,
            "t": t,
            "phase": self.dwell.phase.value,
            "held": self.robot.held,
            "robot": self.robot.status,
            "snap_enabled": self.snap_enabled,
            "calibrated": self.model is not None,
        }

    def _calib_point(self, t: float) -> dict:
        run = self.calibrating
        p = run.points[run.index]
        return {
            "type": "calib_point",
            "sid": self.sid,
            "t": t,
            "index": run.index,
            "total": len(run.points),
            "x": p.x,
            "y": p.y,
        }

    def _error(self, t: float, code: str, message: str) -> dict:
        return {"type": "error", "sid": self.sid, "t": t, "code": code, "message": message}


def _copy_scene(scene: Scene) -> Scene:
    objects = [
        SimObject(
            id=o.id,
            label=o.label,
            pose=o.pose,
            bbox_w=o.bbox_w,
            bbox_h=o.bbox_h,
            attached=o.attached,
        )
        for o in scene.objects.values()
    ]
    return Scene.from_objects(objects)


def replay(lines, session: Session | None = None) -> list[str]:
    """Reprocess an inbound trace; returns the outbound transcript lines.

    Lines recorded from a session log may carry an "out " / "in " prefix;
    outbound lines are skipped so a captured combined log replays as-is.
    """
    session = session or Session(sid="replay")
    out: list[str] = []
    for line in lines:
        line = line.rstrip("\n")
        if not line.strip():
            continue
        if line.startswith("out "):
            continue
        if line.startswith("in "):
            line = line[3:]
        out.extend(session.handle_line(line))
    return out


def dump_log(session: Session) -> str:
    """The combined in/out log as prefixed lines, arrival order preserved."""
    return "".join(f"{direction} {line}\n" for direction, line in session.log)
