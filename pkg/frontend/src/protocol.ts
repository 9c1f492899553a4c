/** Wire schema for the line-framed JSON session protocol.
 *
 * One JSON object per line. The console sends gaze samples and control
 * commands; the service answers with cursor, frame, state, robot and
 * calibration messages, all tagged with the session id.
 */

export interface GazeMsg {
  type: "gaze";
  t: number;
  u: number;
  v: number;
}

export interface ControlMsg {
  type: "control";
  t: number;
  command: string;
  args?: Record<string, unknown>;
}

export type ClientMsg = GazeMsg | ControlMsg;

export interface Box {
  id: string;
  label: string;
  cx: number;
  cy: number;
  w: number;
  h: number;
}

export interface CursorMsg {
  type: "cursor";
  sid: string;
  t: number;
  raw: [number, number];
  snapped: [number, number];
  target_id: string | null;
  is_snapped: boolean;
  dwell_progress: number;
}

export interface FrameMsg {
  type: "frame";
  sid: string;
  t: number;
  boxes: Box[];
}

export interface StateMsg {
  type: "state";
  sid: string;
  t: number;
  phase: string;
  held: string | null;
  robot: string;
  snap_enabled: boolean;
  calibrated: boolean;
}

export interface RobotEventMsg {
  type: "robot_event";
  sid: string;
  t: number;
  event: string;
  payload: Record<string, unknown>;
}

export interface CalibPointMsg {
  type: "calib_point";
  sid: string;
  t: number;
  index: number;
  total: number;
  x: number;
  y: number;
}

export interface CalibDoneMsg {
  type: "calib_done";
  sid: string;
  t: number;
  residual_rms: number;
  points: number;
}

export interface ErrorMsg {
  type: "error";
  sid: string;
  t: number;
  code: string;
  message: string;
}

export type ServerMsg =
  | CursorMsg
  | FrameMsg
  | StateMsg
  | RobotEventMsg
  | CalibPointMsg
  | CalibDoneMsg
  | ErrorMsg;

function isRecord(x: unknown): x is Record<string, unknown> {
  return typeof x === "object" && x !== null && !Array.isArray(x);
}

function isFiniteNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function isPair(x: unknown): x is [number, number] {
  return Array.isArray(x) && x.length === 2 && x.every(isFiniteNumber);
}

function isBox(x: unknown): x is Box {
  return (
    isRecord(x) &&
    typeof x.id === "string" &&
    typeof x.label === "string" &&
    isFiniteNumber(x.cx) &&
    isFiniteNumber(x.cy) &&
    isFiniteNumber(x.w) &&
    isFiniteNumber(x.h)
  );
}

/** Parse one line from the service. Returns null for anything malformed:
 * the console must keep rendering through garbage, never throw. */
export function parseServerLine(line: string): ServerMsg | null {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch {
    return null;
  }
  if (!isRecord(obj) || typeof obj.sid !== "string" || !isFiniteNumber(obj.t)) {
    return null;
  }
  switch (obj.type) {
    case "cursor":
      if (
        isPair(obj.raw) &&
        isPair(obj.snapped) &&
        (obj.target_id === null || typeof obj.target_id === "string") &&
        typeof obj.is_snapped === "boolean" &&
        isFiniteNumber(obj.dwell_progress)
      ) {
        return obj as unknown as CursorMsg;
      }
      return null;
    case "frame":
      if (Array.isArray(obj.boxes) && obj.boxes.every(isBox)) {
        return obj as unknown as FrameMsg;
      }
      return null;
    case "state":
      if (
        typeof obj.phase === "string" &&
        (obj.held === null || typeof obj.held === "string") &&
        typeof obj.robot === "string" &&
        typeof obj.snap_enabled === "boolean" &&
        typeof obj.calibrated === "boolean"
      ) {
        return obj as unknown as StateMsg;
      }
      return null;
    case "robot_event":
      if (typeof obj.event === "string" && isRecord(obj.payload)) {
        return obj as unknown as RobotEventMsg;
      }
      return null;
    case "calib_point":
      if (
        isFiniteNumber(obj.index) &&
        isFiniteNumber(obj.total) &&
        isFiniteNumber(obj.x) &&
        isFiniteNumber(obj.y)
      ) {
        return obj as unknown as CalibPointMsg;
      }
      return null;
    case "calib_done":
      if (isFiniteNumber(obj.residual_rms) && isFiniteNumber(obj.points)) {
        return obj as unknown as CalibDoneMsg;
      }
      return null;
    case "error":
      if (typeof obj.code === "string" && typeof obj.message === "string") {
        return obj as unknown as ErrorMsg;
      }
      return null;
    default:
      return null;
  }
}

export function encodeLine(msg: ClientMsg): string {
  return JSON.stringify(msg);
}

export function gazeMsg(t: number, u: number, v: number): GazeMsg {
  return { type: "gaze", t, u, v };
}

export function controlMsg(
  t: number,
  command: string,
  args?: Record<string, unknown>,
): ControlMsg {
  return args === undefined
    ? { type: "control", t, command }
    : { type: "control", t, command, args };
}
