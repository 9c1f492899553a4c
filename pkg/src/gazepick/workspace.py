"""Detected-object bookkeeping and magnetic cursor snapping.

Object detections arrive as camera-space bounding boxes; a fixed affine
view mapping converts them to screen space where the gaze cursor lives.
Snapping relocates the cursor to the center of the box the gaze falls in,
which removes the need for pixel-accurate fixation on small objects. When
the gaze sits inside several overlapping boxes the nearest center wins,
with box area and then lexicographic id as tie-breaks, so the choice is
deterministic. A box that has captured the cursor holds it until the gaze
leaves the box inflated by a hysteresis margin, which suppresses flicker
at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

from .calibration import ScreenPoint

DEFAULT_HYSTERESIS = 0.10


class WorkspaceError(Exception):
    """Base class for workspace failures."""


class StaleFrame(WorkspaceError):
    """A detection frame arrived with a timestamp older than the current one."""


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in camera pixels, center + extent."""

    id: str
    label: str
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("box id must be non-empty")
        if not (self.w > 0.0 and self.h > 0.0):
            raise ValueError(f"box {self.id} must have positive extent, got {self.w}x{self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def contains(self, x: float, y: float, inflate: float = 0.0) -> bool:
        """Closed-boundary hit test, optionally inflating both extents."""
        half_w = self.w * (1.0 + inflate) / 2.0
        half_h = self.h * (1.0 + inflate) / 2.0
        return abs(x - self.cx) <= half_w and abs(y - self.cy) <= half_h


@dataclass(frozen=True)
class DetectionFrame:
    """One detector output: a timestamp and boxes with unique ids."""

    t: float
    boxes: tuple[BBox, ...]

    def __post_init__(self) -> None:
        ids = [b.id for b in self.boxes]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate box ids in frame: {sorted(ids)}")

    def box(self, box_id: str) -> BBox | None:
        for b in self.boxes:
            if b.id == box_id:
                return b
        return None


@dataclass(frozen=True)
class ViewMapping:
    """Affine camera-to-screen pixel mapping: screen = scale * cam + offset."""

    scale_x: float = 1.0
    scale_y: float = 1.0
    offset_x: float = 0.0
    offset_y: float = 0.0

    def __post_init__(self) -> None:
        if self.scale_x == 0.0 or self.scale_y == 0.0:
            raise ValueError("view scales must be non-zero")

    def to_screen(self, x: float, y: float) -> tuple[float, float]:
        return (self.scale_x * x + self.offset_x, self.scale_y * y + self.offset_y)

    def to_camera(self, x: float, y: float) -> tuple[float, float]:
        return ((x - self.offset_x) / self.scale_x, (y - self.offset_y) / self.scale_y)

    def box_to_screen(self, box: BBox) -> tuple[float, float, float, float]:
        """Screen-space center and extent of a camera-space box."""
        cx, cy = self.to_screen(box.cx, box.cy)
        return (cx, cy, box.w * abs(self.scale_x), box.h * abs(self.scale_y))


@dataclass(frozen=True)
class CursorState:
    """Where the cursor is drawn and why.

    raw is the smoothed gaze point; snapped is what gets displayed. When a
    box captured the cursor, target_id names it, is_snapped is True, and
    snapped sits at the box center. With snapping disabled, target_id still
    reports the box under the gaze (hit detection keeps working) but
    is_snapped stays False and the cursor is never relocated. target_cam
    and gaze_cam carry the camera-pixel equivalents for command dispatch,
    and clear_of_boxes reports whether the gaze sits outside every box even
    after hysteresis inflation (a safe spot to place an object).
    """

    raw: ScreenPoint
    snapped: ScreenPoint
    target_id: str | None
    is_snapped: bool
    target_cam: tuple[float, float] | None
    gaze_cam: tuple[float, float]
    clear_of_boxes: bool


def _select_target(
    gaze: ScreenPoint,
    frame: DetectionFrame,
    view: ViewMapping,
    prev_target_id: str | None,
    hysteresis: float,
) -> BBox | None:
    """Pick the box that owns the gaze point, if any.

    The previously snapped box keeps ownership while the gaze remains inside
    its inflated bounds; otherwise the containing box with the nearest
    center wins, tie-broken by smaller area then lexicographic id.
    """
    if prev_target_id is not None:
        prev = frame.box(prev_target_id)
        if prev is not None:
            cx, cy, w, h = view.box_to_screen(prev)
            if (
                abs(gaze.x - cx) <= w * (1.0 + hysteresis) / 2.0
                and abs(gaze.y - cy) <= h * (1.0 + hysteresis) / 2.0
            ):
                return prev

    best: tuple[float, float, str] | None = None
    best_box: BBox | None = None
    for box in frame.boxes:
        cx, cy, w, h = view.box_to_screen(box)
        if abs(gaze.x - cx) > w / 2.0 or abs(gaze.y - cy) > h / 2.0:
            continue
        dx = gaze.x - cx
        dy = gaze.y - cy
        key = (dx * dx + dy * dy, w * h, box.id)
        if best is None or key < best:
            best = key
            best_box = box
    return best_box


def _clear_of_boxes(gaze: ScreenPoint, frame: DetectionFrame, view: ViewMapping, hysteresis: float) -> bool:
    for box in frame.boxes:
        cx, cy, w, h = view.box_to_screen(box)
        if (
            abs(gaze.x - cx) <= w * (1.0 + hysteresis) / 2.0
            and abs(gaze.y - cy) <= h * (1.0 + hysteresis) / 2.0
        ):
            return False
    return True


def snap(
    gaze: ScreenPoint,
    frame: DetectionFrame,
    view: ViewMapping,
    prev_target_id: str | None = None,
    hysteresis: float = DEFAULT_HYSTERESIS,
) -> CursorState:
    """Magnetic cursor: relocate the gaze point to the captured box center.

    With prev_target_id unset this is the stateless law: the cursor lands
    on the center of the box containing the gaze, or stays on the gaze
    point when no box contains it. Passing the previous target id enables
    boundary hysteresis.
    """
    target = _select_target(gaze, frame, view, prev_target_id, hysteresis)
    gaze_cam = view.to_camera(gaze.x, gaze.y)
    if target is None:
        return CursorState(
            raw=gaze,
            snapped=gaze,
            target_id=None,
            is_snapped=False,
            target_cam=None,
            gaze_cam=gaze_cam,
            clear_of_boxes=_clear_of_boxes(gaze, frame, view, hysteresis),
        )
    cx, cy, _, _ = view.box_to_screen(target)
    return CursorState(
        raw=gaze,
        snapped=ScreenPoint(cx, cy),
        target_id=target.id,
        is_snapped=True,
        target_cam=(target.cx, target.cy),
        gaze_cam=gaze_cam,
        clear_of_boxes=False,
    )


def snap_disabled(
    gaze: ScreenPoint,
    frame: DetectionFrame,
    view: ViewMapping,
    prev_target_id: str | None = None,
    hysteresis: float = DEFAULT_HYSTERESIS,
) -> CursorState:
    """Control condition: hit detection without cursor relocation.

    target_id reports the box strictly containing the gaze (same tie-break
    as snap, no hysteresis carry-over), the cursor stays on the gaze point,
    and is_snapped is always False.
    """
    target = _select_target(gaze, frame, view, None, hysteresis)
    gaze_cam = view.to_camera(gaze.x, gaze.y)
    return CursorState(
        raw=gaze,
        snapped=gaze,
        target_id=None if target is None else target.id,
        is_snapped=False,
        target_cam=None if target is None else (target.cx, target.cy),
        gaze_cam=gaze_cam,
        clear_of_boxes=_clear_of_boxes(gaze, frame, view, hysteresis)
        if target is None
        else False,
    )


def update_frame(current: DetectionFrame | None, incoming: DetectionFrame) -> DetectionFrame:
    """Adopt a new detection frame, preserving ids across small motion.

    Boxes are matched greedily by nearest center within half the smaller
    box extent of the pair; matched boxes inherit the previous id, new
    boxes keep their incoming id, and vanished boxes are dropped. Raises
    StaleFrame when the incoming timestamp precedes the current frame.
    """
    if current is None:
        return incoming
    if incoming.t < current.t:
        raise StaleFrame(f"frame at t={incoming.t} after frame at t={current.t}")

    pairs = []
    for pi, prev in enumerate(current.boxes):
        for ii, new in enumerate(incoming.boxes):
            dx = prev.cx - new.cx
            dy = prev.cy - new.cy
            dist = (dx * dx + dy * dy) ** 0.5
            limit = 0.5 * min(prev.w, prev.h, new.w, new.h)
            if dist <= limit:
                pairs.append((dist, pi, ii))
    pairs.sort(key=lambda p: (p[0], p[1], p[2]))

    prev_used: set[int] = set()
    new_assigned: dict[int, str] = {}
    for dist, pi, ii in pairs:
        if pi in prev_used or ii in new_assigned:
            continue
        prev_used.add(pi)
        new_assigned[ii] = current.boxes[pi].id

    taken = set(new_assigned.values())
    boxes = []
    for ii, box in enumerate(incoming.boxes):
        if ii in new_assigned:
            boxes.append(BBox(new_assigned[ii], box.label, box.cx, box.cy, box.w, box.h))
        else:
            box_id = box.id
            suffix = 2
            while box_id in taken:
                box_id = f"{box.id}~{suffix}"
                suffix += 1
            taken.add(box_id)
            boxes.append(BBox(box_id, box.label, box.cx, box.cy, box.w, box.h))
    return DetectionFrame(t=incoming.t, boxes=tuple(boxes))
