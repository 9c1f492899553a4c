"""Kinematics-free simulated arm executing pick and place commands.

The tool center point moves along straight segments at constant speed;
gripper actions are instantaneous zero-length segments. A pick runs

    move above target -> descend -> close gripper -> ascend -> return home

and a place mirrors it with the gripper opening at the bottom. Each
completed segment emits timestamped events, ending in a terminal
pick_done, place_done, or failed event. Time only advances through
sim_tick with caller-supplied steps, so a fixed command and tick schedule
always yields a bit-identical event timeline. An injectable failure rate
makes the grasp fail at the moment the gripper would close, after which
the arm returns home empty.

Objects live in a Scene; a held object tracks the tool center point until
it is released at the place target. detector_frame projects the scene
through the workspace homography to produce the camera-space detections
the rest of the pipeline consumes, so picks visibly remove objects from
the camera view and places put them back down elsewhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Homography, WorkspaceBounds, WorkspacePoint, workspace_to_pixel
from .workspace import BBox, DetectionFrame

DEFAULT_SPEED_MPS = 0.25
DEFAULT_CLEARANCE_M = 0.02
MS_PER_S = 1000.0


class RobotError(Exception):
    """Base class for executor failures."""


class RobotBusy(RobotError):
    """A command arrived while another is still executing."""


class TargetOutOfBounds(RobotError):
    """The requested workspace point is outside the reachable region."""


class ObjectMissing(RobotError):
    """The scene holds no object with the requested id."""


class NothingHeld(RobotError):
    """Place requested with an open gripper."""


@dataclass(frozen=True)
class RobotEvent:
    """One timeline entry: what happened and when (sim clock, ms)."""

    kind: str
    t: float
    payload: dict = field(default_factory=dict)


@dataclass
class SimObject:
    """A manipulable object: base-frame pose plus its camera-space extent."""

    id: str
    label: str
    pose: WorkspacePoint
    bbox_w: float
    bbox_h: float
    attached: bool = False


@dataclass
class Scene:
    """All manipulable objects, keyed by id."""

    objects: dict[str, SimObject]

    @classmethod
    def from_objects(cls, objects: list[SimObject]) -> "Scene":
        ids = [o.id for o in objects]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate object ids: {sorted(ids)}")
        return cls(objects={o.id: o for o in objects})

    def attached_ids(self) -> list[str]:
        return [o.id for o in self.objects.values() if o.attached]


@dataclass(frozen=True)
class _Segment:
    """A straight TCP move; zero length means an instantaneous action."""

    end: WorkspacePoint
    action: str | None  # gripper action at completion: "close" | "open" | "fail"
    events: tuple[str, ...]  # event kinds emitted at completion


class SimRobot:
    """Single-owner executor state; advance it only through sim_tick."""

    def __init__(
        self,
        home: WorkspacePoint,
        bounds: WorkspaceBounds,
        speed_mps: float = DEFAULT_SPEED_MPS,
        clearance_m: float = DEFAULT_CLEARANCE_M,
        fail_rate: float = 0.0,
        seed: int = 0,
    ) -> None:
        if not speed_mps > 0.0:
            raise ValueError(f"speed_mps must be > 0, got {speed_mps}")
        if not clearance_m >= 0.0:
            raise ValueError(f"clearance_m must be >= 0, got {clearance_m}")
        if not 0.0 <= fail_rate <= 1.0:
            raise ValueError(f"fail_rate must be in [0, 1], got {fail_rate}")
        self.home = home
        self.bounds = bounds
        self.speed_mps = speed_mps
        self.clearance_m = clearance_m
        self.fail_rate = fail_rate
        self.tcp = home
        self.gripper_closed = False
        self.held: str | None = None
        self.clock_ms = 0.0
        self._segments: list[_Segment] = []
        self._terminal: tuple[str, dict] | None = None
        self._command: str | None = None
        self._pending_object: str | None = None
        self._pick_target: WorkspacePoint | None = None
        self._place_target: WorkspacePoint | None = None
        self._rng = np.random.default_rng(seed)

    @property
    def busy(self) -> bool:
        return self._command is not None

    @property
    def status(self) -> str:
        if self._command is None:
            return "holding" if self.held is not None else "idle"
        if self._segments and self._segments[0].end == self.tcp and self._segments[0].action:
            return "grasping" if self._segments[0].action in ("close", "fail") else "releasing"
        return "moving"

    def _plan_times(self, waypoints: list[WorkspacePoint]) -> list[float]:
        """Projected completion times (ms) for each waypoint from now."""
        times = []
        t = self.clock_ms
        prev = self.tcp
        for wp in waypoints:
            t += _distance(prev, wp) / self.speed_mps * MS_PER_S
            times.append(t)
            prev = wp
        return times

    def execute_pick(
        self, target: WorkspacePoint, object_id: str, scene: Scene
    ) -> list[tuple[str, float]]:
        """Queue a pick; returns the projected (event kind, time) schedule.

        Raises RobotBusy while a command runs or something is held,
        ObjectMissing for unknown ids, and TargetOutOfBounds for targets
        outside the reachable region.
        """
        if self.busy:
            raise RobotBusy("a command is already executing")
        if self.held is not None:
            raise RobotBusy(f"already holding {self.held}")
        if object_id not in scene.objects:
            raise ObjectMissing(f"no object {object_id} in scene")
        if not self.bounds.contains(target):
            raise TargetOutOfBounds(f"{target} outside {self.bounds}")

        above = WorkspacePoint(target.x, target.y, target.z + self.clearance_m)
        failing = self.fail_rate > 0.0 and float(self._rng.random()) < self.fail_rate
        grasp = _Segment(target, "fail" if failing else "close",
                         ("grasp_failed",) if failing else ("gripper_closed",))
        terminal_kind = "failed" if failing else "pick_done"
        self._segments = [
            _Segment(above, None, ("above_target",)),
            grasp,
            _Segment(above, None, ("ascended",)),
            _Segment(self.home, None, ("at_home",)),
        ]
        self._terminal = (terminal_kind, {"object_id": object_id})
        self._command = "picking"
        self._pending_object = object_id
        self._pick_target = target

        waypoints = [s.end for s in self._segments]
        schedule = list(zip(("above_target", grasp.events[0], "ascended", "at_home"),
                            self._plan_times(waypoints)))
        schedule.append((terminal_kind, schedule[-1][1]))
        return schedule

    def execute_place(self, target: WorkspacePoint) -> list[tuple[str, float]]:
        """Queue a place of the held object; same schedule contract as pick."""
        if self.busy:
            raise RobotBusy("a command is already executing")
        if self.held is None:
            raise NothingHeld("place requested but the gripper is empty")
        if not self.bounds.contains(target):
            raise TargetOutOfBounds(f"{target} outside {self.bounds}")

        above = WorkspacePoint(target.x, target.y, target.z + self.clearance_m)
        self._segments = [
            _Segment(above, None, ("above_target",)),
            _Segment(target, "open", ("gripper_opened",)),
            _Segment(above, None, ("ascended",)),
            _Segment(self.home, None, ("at_home",)),
        ]
        self._terminal = ("place_done", {"object_id": self.held})
        self._command = "placing"
        self._place_target = target

        waypoints = [s.end for s in self._segments]
        schedule = list(zip(("above_target", "gripper_opened", "ascended", "at_home"),
                            self._plan_times(waypoints)))
        schedule.append(("place_done", schedule[-1][1]))
        return schedule

    def sim_tick(self, dt_ms: float, scene: Scene) -> list[RobotEvent]:
        """Advance the simulation clock by dt_ms, emitting completed events.

        The TCP covers at most speed * dt meters per tick, possibly across
        several segment boundaries; events carry the exact sub-tick time at
        which their segment finished.
        """
        if dt_ms < 0.0:
            raise ValueError(f"dt_ms must be >= 0, got {dt_ms}")
        events: list[RobotEvent] = []
        t = self.clock_ms
        budget = self.speed_mps * dt_ms / MS_PER_S

        while self._segments:
            seg = self._segments[0]
            dist = _distance(self.tcp, seg.end)
            if dist > budget:
                if budget > 0.0:
                    frac = budget / dist
                    self.tcp = WorkspacePoint(
                        self.tcp.x + (seg.end.x - self.tcp.x) * frac,
                        self.tcp.y + (seg.end.y - self.tcp.y) * frac,
                        self.tcp.z + (seg.end.z - self.tcp.z) * frac,
                    )
                budget = 0.0
                break
            budget -= dist
            t += dist / self.speed_mps * MS_PER_S
            self.tcp = seg.end
            self._segments.pop(0)
            self._apply_action(seg.action, scene)
            for kind in seg.events:
                events.append(RobotEvent(kind, t, {"tcp": [self.tcp.x, self.tcp.y, self.tcp.z]}))
            if not self._segments and self._terminal is not None:
                kind, payload = self._terminal
                events.append(RobotEvent(kind, t, dict(payload)))
                self._terminal = None
                self._command = None

        self.clock_ms += dt_ms
        if self.held is not None:
            obj = scene.objects[self.held]
            obj.pose = self.tcp
        return events

    def _apply_action(self, action: str | None, scene: Scene) -> None:
        if action is None:
            return
        if action == "close":
            self.gripper_closed = True
            self.held = self._pending_object
            obj = scene.objects[self.held]
            obj.attached = True
            obj.pose = self.tcp
        elif action == "open":
            obj = scene.objects[self.held]
            obj.attached = False
            obj.pose = self._place_target
            self.gripper_closed = False
            self.held = None
        elif action == "fail":
            # the grasp closed on nothing; reopen and come home empty
            self.gripper_closed = False
        else:
            raise AssertionError(f"unknown action {action}")


def _distance(a: WorkspacePoint, b: WorkspacePoint) -> float:
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def execute_pick(
    robot: SimRobot, target: WorkspacePoint, object_id: str, scene: Scene
) -> list[tuple[str, float]]:
    return robot.execute_pick(target, object_id, scene)


def execute_place(robot: SimRobot, target: WorkspacePoint) -> list[tuple[str, float]]:
    return robot.execute_place(target)


def sim_tick(robot: SimRobot, dt_ms: float, scene: Scene) -> list[RobotEvent]:
    return robot.sim_tick(dt_ms, scene)


def detector_frame(scene: Scene, h: Homography, t: float) -> DetectionFrame:
    """Project unattached scene objects into the camera as detections.

    Held objects disappear from the detector, mirroring a real overhead
    camera that no longer sees an object inside the gripper.
    """
    boxes = []
    for obj in sorted(scene.objects.values(), key=lambda o: o.id):
        if obj.attached:
            continue
        px, py = workspace_to_pixel(h, WorkspacePoint(obj.pose.x, obj.pose.y, h.z_table))
        boxes.append(BBox(obj.id, obj.label, px, py, obj.bbox_w, obj.bbox_h))
    return DetectionFrame(t=t, boxes=tuple(boxes))


def load_scene(path: str) -> Scene:
    """Read a scene file: {"objects": [{id, label, pose, bbox_px}, ...]}."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("kind") != "tabletop-scene":
        raise ValueError(f"{path} is not a scene file")
    objects = []
    for entry in payload["objects"]:
        objects.append(
            SimObject(
                id=str(entry["id"]),
                label=str(entry["label"]),
                pose=WorkspacePoint(*[float(v) for v in entry["pose"]]),
                bbox_w=float(entry["bbox_px"][0]),
                bbox_h=float(entry["bbox_px"][1]),
            )
        )
    return Scene.from_objects(objects)


def save_scene(scene: Scene, path: str) -> None:
    payload = {
        "kind": "tabletop-scene",
        "objects": [
            {
                "id": o.id,
                "label": o.label,
                "pose": [o.pose.x, o.pose.y, o.pose.z],
                "bbox_px": [o.bbox_w, o.bbox_h],
            }
            for o in sorted(scene.objects.values(), key=lambda o: o.id)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
