"""Dwell-based selection: sustained fixation triggers pick and place.

Hovering an object for dwell_ms milliseconds issues a Pick; once the
robot holds something, hovering an empty spot for the same duration
issues a Place there. Short target losses within grace_ms do not reset
the dwell timer, and while aiming at empty space the anchor point is
allowed to drift by drift_px before the timer restarts. The machine is
advanced only by dwell_tick with caller-supplied timestamps, so identical
cursor streams always produce identical command streams.

Phases and transitions:

    Idle           -- gaze captured by a box --> HoverObject
    HoverObject    -- dwell_ms elapsed -------> ExecutingPick  (emits Pick)
    ExecutingPick  -- robot reports done -----> Holding
    Holding        -- gaze on clear spot -----> HoverEmpty
    HoverEmpty     -- dwell_ms elapsed -------> ExecutingPlace (emits Place)
    ExecutingPlace -- robot reports done -----> Idle

A failed pick returns to Idle; a failed place returns to Holding (the
object is still in the gripper). While an Executing phase is active the
cursor is ignored, so at most one robot command is ever in flight and
picks and places strictly alternate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

from .calibration import ScreenPoint
from .workspace import CursorState


class Phase(str, enum.Enum):
    IDLE = "idle"
    HOVER_OBJECT = "hover_object"
    EXECUTING_PICK = "executing_pick"
    HOLDING = "holding"
    HOVER_EMPTY = "hover_empty"
    EXECUTING_PLACE = "executing_place"


class Outcome(str, enum.Enum):
    PICK_DONE = "pick_done"
    PLACE_DONE = "place_done"
    FAILED = "failed"


class DwellError(Exception):
    """Base class for dwell protocol failures."""


class UnexpectedCompletion(DwellError):
    """A robot completion arrived in a phase that has no command in flight."""


@dataclass(frozen=True)
class DwellConfig:
    """Dwell timing and the screen region where placing is allowed.

    rect is (x_min, y_min, x_max, y_max) in screen pixels; empty-spot
    anchors outside it never arm the place timer.
    """

    ms: float = 3000.0
    grace_ms: float = 150.0
    drift_px: float = 40.0
    rect: tuple[float, float, float, float] = (0.0, 0.0, 1280.0, 720.0)

    def __post_init__(self) -> None:
        if not self.ms > 0.0:
            raise ValueError(f"dwell ms must be > 0, got {self.ms}")
        if not self.grace_ms >= 0.0:
            raise ValueError(f"grace_ms must be >= 0, got {self.grace_ms}")
        if not self.drift_px >= 0.0:
            raise ValueError(f"drift_px must be >= 0, got {self.drift_px}")
        x0, y0, x1, y1 = self.rect
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"rect must be non-empty, got {self.rect}")

    def rect_contains(self, p: ScreenPoint) -> bool:
        x0, y0, x1, y1 = self.rect
        return x0 <= p.x <= x1 and y0 <= p.y <= y1


@dataclass(frozen=True)
class RobotRequest:
    """A command for the executor. pixel is in camera coordinates."""

    kind: str  # "pick" | "place"
    object_id: str | None
    pixel: tuple[float, float]
    issued_at: float


@dataclass(frozen=True)
class InteractionState:
    """Snapshot of the dwell machine after a tick.

    progress ramps 0 to 1 while a dwell timer runs and reads 0 otherwise;
    it is what a UI renders as the dwell ring. anchor is the screen point
    being held during HoverEmpty, anchor_cam its camera-space equivalent.
    """

    config: DwellConfig
    phase: Phase = Phase.IDLE
    target_id: str | None = None
    since_ms: float | None = None
    lost_at_ms: float | None = None
    anchor: ScreenPoint | None = None
    anchor_cam: tuple[float, float] | None = None
    progress: float = 0.0


def dwell_init(config: DwellConfig | None = None) -> InteractionState:
    return InteractionState(config=config or DwellConfig())


def _progress(cfg: DwellConfig, since: float, t: float) -> float:
    value = (t - since) / cfg.ms
    return 0.0 if value < 0.0 else (1.0 if value > 1.0 else value)


def dwell_tick(
    state: InteractionState, cursor: CursorState, t: float
) -> tuple[InteractionState, RobotRequest | None]:
    """Advance the machine to time t (ms) under the given cursor.

    Returns the next state and the robot command this tick emits, if any.
    Commands fire on the first tick whose time reaches since_ms + ms, never
    earlier. The executing phases consume ticks without effect until
    on_robot_done is called.
    """
    cfg = state.config
    phase = state.phase

    if phase in (Phase.EXECUTING_PICK, Phase.EXECUTING_PLACE):
        return state, None

    if phase == Phase.IDLE:
        if cursor.target_id is not None:
            return (
                replace(
                    state,
                    phase=Phase.HOVER_OBJECT,
                    target_id=cursor.target_id,
                    since_ms=t,
                    lost_at_ms=None,
                    progress=_progress(cfg, t, t),
                ),
                None,
            )
        return state, None

    if phase == Phase.HOVER_OBJECT:
        assert state.since_ms is not None and state.target_id is not None
        if cursor.target_id == state.target_id:
            if t - state.since_ms >= cfg.ms:
                assert cursor.target_cam is not None
                request = RobotRequest(
                    kind="pick",
                    object_id=state.target_id,
                    pixel=cursor.target_cam,
                    issued_at=t,
                )
                return (
                    replace(
                        state,
                        phase=Phase.EXECUTING_PICK,
                        lost_at_ms=None,
                        progress=0.0,
                    ),
                    request,
                )
            return (
                replace(
                    state,
                    lost_at_ms=None,
                    progress=_progress(cfg, state.since_ms, t),
                ),
                None,
            )
        if cursor.target_id is None:
            if state.lost_at_ms is None:
                return (
                    replace(
                        state,
                        lost_at_ms=t,
                        progress=_progress(cfg, state.since_ms, t),
                    ),
                    None,
                )
            if t - state.lost_at_ms > cfg.grace_ms:
                return (
                    replace(
                        state,
                        phase=Phase.IDLE,
                        target_id=None,
                        since_ms=None,
                        lost_at_ms=None,
                        progress=0.0,
                    ),
                    None,
                )
            return replace(state, progress=_progress(cfg, state.since_ms, t)), None
        # a different box captured the gaze; restart the timer on it
        return (
            replace(
                state,
                target_id=cursor.target_id,
                since_ms=t,
                lost_at_ms=None,
                progress=_progress(cfg, t, t),
            ),
            None,
        )

    if phase == Phase.HOLDING:
        if (
            cursor.target_id is None
            and cursor.clear_of_boxes
            and cfg.rect_contains(cursor.snapped)
        ):
            return (
                replace(
                    state,
                    phase=Phase.HOVER_EMPTY,
                    anchor=cursor.snapped,
                    anchor_cam=cursor.gaze_cam,
                    since_ms=t,
                    lost_at_ms=None,
                    progress=_progress(cfg, t, t),
                ),
                None,
            )
        return state, None

    if phase == Phase.HOVER_EMPTY:
        assert state.since_ms is not None and state.anchor is not None
        eligible = (
            cursor.target_id is None
            and cursor.clear_of_boxes
            and cfg.rect_contains(cursor.snapped)
        )
        if not eligible:
            return (
                replace(
                    state,
                    phase=Phase.HOLDING,
                    anchor=None,
                    anchor_cam=None,
                    since_ms=None,
                    lost_at_ms=None,
                    progress=0.0,
                ),
                None,
            )
        drift = math.hypot(
            cursor.snapped.x - state.anchor.x, cursor.snapped.y - state.anchor.y
        )
        if drift > cfg.drift_px:
            return (
                replace(
                    state,
                    anchor=cursor.snapped,
                    anchor_cam=cursor.gaze_cam,
                    since_ms=t,
                    progress=_progress(cfg, t, t),
                ),
                None,
            )
        if t - state.since_ms >= cfg.ms:
            assert state.anchor_cam is not None
            request = RobotRequest(
                kind="place",
                object_id=None,
                pixel=state.anchor_cam,
                issued_at=t,
            )
            return (
                replace(state, phase=Phase.EXECUTING_PLACE, progress=0.0),
                request,
            )
        return replace(state, progress=_progress(cfg, state.since_ms, t)), None

    raise AssertionError(f"unhandled phase {phase}")


def on_robot_done(state: InteractionState, outcome: Outcome) -> InteractionState:
    """Fold the executor's terminal report back into the machine.

    Raises UnexpectedCompletion when no matching command is in flight.
    """
    if state.phase == Phase.EXECUTING_PICK:
        if outcome == Outcome.PICK_DONE:
            return replace(
                state,
                phase=Phase.HOLDING,
                target_id=None,
                since_ms=None,
                lost_at_ms=None,
                progress=0.0,
            )
        if outcome == Outcome.FAILED:
            return replace(
                state,
                phase=Phase.IDLE,
                target_id=None,
                since_ms=None,
                lost_at_ms=None,
                progress=0.0,
            )
    if state.phase == Phase.EXECUTING_PLACE:
        if outcome == Outcome.PLACE_DONE:
            return replace(
                state,
                phase=Phase.IDLE,
                anchor=None,
                anchor_cam=None,
                since_ms=None,
                lost_at_ms=None,
                progress=0.0,
            )
        if outcome == Outcome.FAILED:
            return replace(
                state,
                phase=Phase.HOLDING,
                anchor=None,
                anchor_cam=None,
                since_ms=None,
                lost_at_ms=None,
                progress=0.0,
            )
    raise UnexpectedCompletion(f"{outcome.value} arrived in phase {state.phase.value}")
