/** Pure view state, folded from wire messages in arrival order.
 *
 * Thin-client law: every field here is copied from a received message or
 * from the connection lifecycle. Nothing is predicted or re-derived; the
 * dwell ring in particular always shows the service's dwell_progress,
 * never a client-side timer.
 */

import type { Box, CursorMsg, ServerMsg } from "./protocol.js";

export type ConnectionStatus = "connecting" | "open" | "reconnecting" | "closed";

export interface RobotPanel {
  status: string;
  held: string | null;
  tcp: [number, number, number] | null;
}

export interface CalibrationView {
  active: boolean;
  index: number;
  total: number;
  x: number;
  y: number;
  residual: number | null;
}

export interface EventEntry {
  t: number;
  text: string;
}

export interface ViewModel {
  connection: ConnectionStatus;
  attempt: number;
  sid: string | null;
  boxes: Box[];
  cursor: CursorMsg | null;
  phase: string;
  dwellProgress: number;
  robot: RobotPanel;
  snapEnabled: boolean;
  calibrated: boolean;
  calibration: CalibrationView;
  events: EventEntry[];
  lastError: string | null;
}

export const MAX_EVENTS = 40;

const IDLE_CALIBRATION: CalibrationView = {
  active: false,
  index: 0,
  total: 0,
  x: 0,
  y: 0,
  residual: null,
};

export function initialViewModel(): ViewModel {
  return {
    connection: "connecting",
    attempt: 0,
    sid: null,
    boxes: [],
    cursor: null,
    phase: "idle",
    dwellProgress: 0,
    robot: { status: "idle", held: null, tcp: null },
    snapEnabled: true,
    calibrated: false,
    calibration: IDLE_CALIBRATION,
    events: [],
    lastError: null,
  };
}

function pushEvent(events: EventEntry[], t: number, text: string): EventEntry[] {
  const next = [...events, { t, text }];
  return next.length > MAX_EVENTS ? next.slice(next.length - MAX_EVENTS) : next;
}

/** Connection lifecycle. A fresh "open" means a fresh server session, so
 * per-session render state resets; the event log survives for the operator. */
export function applyConnection(
  vm: ViewModel,
  status: ConnectionStatus,
  attempt = 0,
): ViewModel {
  if (status === "open") {
    return {
      ...initialViewModel(),
      connection: "open",
      attempt: 0,
      events: pushEvent(vm.events, 0, "connected"),
    };
  }
  const note =
    status === "reconnecting" ? pushEvent(vm.events, 0, `reconnecting (attempt ${attempt + 1})`) : vm.events;
  return {
    ...vm,
    connection: status,
    attempt,
    events: note,
    calibration: { ...vm.calibration, active: false },
  };
}

/** Local overlay close for the abort button; the service keeps its prior
 * model, so nothing else changes until its next state message. */
export function closeCalibration(vm: ViewModel): ViewModel {
  return { ...vm, calibration: { ...vm.calibration, active: false } };
}

function describeRobotEvent(event: string, payload: Record<string, unknown>): string {
  const parts = [event];
  if (typeof payload.object_id === "string") {
    parts.push(payload.object_id);
  }
  const target = payload.target;
  if (Array.isArray(target) && target.every((v) => typeof v === "number")) {
    parts.push(`[${target.map((v) => (v as number).toFixed(3)).join(", ")}]`);
  }
  return parts.join(" ");
}

function tcpFrom(payload: Record<string, unknown>): [number, number, number] | null {
  const tcp = payload.tcp;
  if (Array.isArray(tcp) && tcp.length === 3 && tcp.every((v) => typeof v === "number")) {
    return [tcp[0], tcp[1], tcp[2]] as [number, number, number];
  }
  return null;
}

export function applyServer(vm: ViewModel, msg: ServerMsg): ViewModel {
  switch (msg.type) {
    case "cursor":
      return {
        ...vm,
        sid: msg.sid,
        cursor: msg,
        dwellProgress: msg.dwell_progress,
      };
    case "frame":
      return { ...vm, sid: msg.sid, boxes: msg.boxes };
    case "state":
      return {
        ...vm,
        sid: msg.sid,
        phase: msg.phase,
        snapEnabled: msg.snap_enabled,
        calibrated: msg.calibrated,
        robot: { ...vm.robot, status: msg.robot, held: msg.held },
      };
    case "robot_event": {
      const tcp = tcpFrom(msg.payload);
      return {
        ...vm,
        sid: msg.sid,
        robot: tcp === null ? vm.robot : { ...vm.robot, tcp },
        events: pushEvent(vm.events, msg.t, describeRobotEvent(msg.event, msg.payload)),
      };
    }
    case "calib_point":
      return {
        ...vm,
        sid: msg.sid,
        calibration: {
          active: true,
          index: msg.index,
          total: msg.total,
          x: msg.x,
          y: msg.y,
          residual: null,
        },
      };
    case "calib_done":
      return {
        ...vm,
        sid: msg.sid,
        calibration: {
          ...IDLE_CALIBRATION,
          residual: msg.residual_rms,
        },
        events: pushEvent(
          vm.events,
          msg.t,
          `calibrated: ${msg.points} points, rms ${msg.residual_rms.toFixed(2)} px`,
        ),
      };
    case "error":
      return {
        ...vm,
        sid: msg.sid,
        lastError: `${msg.code}: ${msg.message}`,
        events: pushEvent(vm.events, msg.t, `error ${msg.code}: ${msg.message}`),
      };
  }
}
