/** Console entry point: canvas rendering, mouse-as-gaze producer, controls.
 *
 * The pointer position stands in for a gaze producer: normalized
 * coordinates stream to the service at the pipeline rate with producer
 * timestamps, and everything on screen is drawn from the messages that
 * come back. Boxes, cursor, dwell ring, robot panel: all server state.
 */

import { ConsoleClient } from "./client.js";
import { controlMsg, gazeMsg } from "./protocol.js";
import {
  applyConnection,
  applyServer,
  closeCalibration,
  initialViewModel,
  type ViewModel,
} from "./view_model.js";

const SCREEN_W = 1280;
const SCREEN_H = 720;
const PRODUCER_HZ = 30;
const CALIB_POINTS = 35;
// wall delay before auto-acking a calibration point: covers the service's
// 500 ms settle window plus a comfortable sample-collection margin
const CALIB_CAPTURE_MS = 1600;

const canvas = document.getElementById("workspace") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const banner = document.getElementById("banner")!;
const producerBox = document.getElementById("producer") as HTMLInputElement;
const snappingBox = document.getElementById("snapping") as HTMLInputElement;
const calibrateBtn = document.getElementById("calibrate") as HTMLButtonElement;
const abortBtn = document.getElementById("abort") as HTMLButtonElement;
const resetBtn = document.getElementById("reset") as HTMLButtonElement;
const eventsList = document.getElementById("events")!;
const fields = {
  robotStatus: document.getElementById("robot-status")!,
  robotHeld: document.getElementById("robot-held")!,
  robotTcp: document.getElementById("robot-tcp")!,
  sid: document.getElementById("session-sid")!,
  phase: document.getElementById("session-phase")!,
  dwell: document.getElementById("session-dwell")!,
  snap: document.getElementById("session-snap")!,
  calib: document.getElementById("session-calib")!,
};

let vm: ViewModel = initialViewModel();
let pointer: { x: number; y: number } | null = null;
let ackTimer: number | null = null;
let renderedEvents: ViewModel["events"] | null = null;

const endpoint = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws`;
const client = new ConsoleClient(endpoint, {
  onMessage(msg) {
    if (msg.type === "calib_point") {
      scheduleAutoAck();
    }
    vm = applyServer(vm, msg);
  },
  onStatus(status, attempt) {
    vm = applyConnection(vm, status, attempt);
    if (status !== "open" && ackTimer !== null) {
      clearTimeout(ackTimer);
      ackTimer = null;
    }
  },
});

function now(): number {
  return performance.now();
}

function scheduleAutoAck(): void {
  if (ackTimer !== null) {
    clearTimeout(ackTimer);
  }
  if (!producerBox.checked) {
    return; // render-only mode: an external producer acks, or the canvas click does
  }
  ackTimer = setTimeout(() => {
    ackTimer = null;
    if (vm.calibration.active) {
      client.send(controlMsg(now(), "calib_point_ack"));
    }
  }, CALIB_CAPTURE_MS) as unknown as number;
}

// -- producers and controls --------------------------------------------------

canvas.addEventListener("mousemove", (ev) => {
  const rect = canvas.getBoundingClientRect();
  pointer = {
    x: ((ev.clientX - rect.left) / rect.width) * SCREEN_W,
    y: ((ev.clientY - rect.top) / rect.height) * SCREEN_H,
  };
});

canvas.addEventListener("mouseleave", () => {
  pointer = null;
});

canvas.addEventListener("click", () => {
  if (vm.calibration.active) {
    client.send(controlMsg(now(), "calib_point_ack"));
  }
});

setInterval(() => {
  if (producerBox.checked && pointer !== null) {
    client.send(gazeMsg(now(), pointer.x / SCREEN_W, pointer.y / SCREEN_H));
  }
}, 1000 / PRODUCER_HZ);

snappingBox.addEventListener("change", () => {
  client.send(controlMsg(now(), "set_snapping", { enabled: snappingBox.checked }));
});

calibrateBtn.addEventListener("click", () => {
  client.send(controlMsg(now(), "start_calibration", { points: CALIB_POINTS }));
});

abortBtn.addEventListener("click", () => {
  client.send(controlMsg(now(), "abort_calibration"));
  vm = closeCalibration(vm);
});

resetBtn.addEventListener("click", () => {
  client.send(controlMsg(now(), "reset"));
});

// -- rendering ----------------------------------------------------------------

const BOX_COLORS = ["#4fa3ff", "#56c98d", "#e2b33c", "#d97bc4", "#8f8df2", "#e27a5f"];

function boxColor(label: string): string {
  let h = 0;
  for (let i = 0; i < label.length; i++) {
    h = (h * 31 + label.charCodeAt(i)) >>> 0;
  }
  return BOX_COLORS[h % BOX_COLORS.length]!;
}

function drawBoxes(): void {
  for (const box of vm.boxes) {
    const color = boxColor(box.label);
    const hovered = vm.cursor !== null && vm.cursor.target_id === box.id;
    ctx.strokeStyle = color;
    ctx.lineWidth = hovered ? 3 : 1.5;
    ctx.globalAlpha = hovered ? 1 : 0.75;
    ctx.strokeRect(box.cx - box.w / 2, box.cy - box.h / 2, box.w, box.h);
    ctx.globalAlpha = 0.12;
    ctx.fillStyle = color;
    ctx.fillRect(box.cx - box.w / 2, box.cy - box.h / 2, box.w, box.h);
    ctx.globalAlpha = 1;
    ctx.fillStyle = color;
    ctx.font = "13px system-ui";
    ctx.fillText(box.label, box.cx - box.w / 2, box.cy - box.h / 2 - 5);
  }
}

function drawCursor(): void {
  const cursor = vm.cursor;
  if (cursor === null) {
    return;
  }
  const [rawX, rawY] = cursor.raw;
  ctx.fillStyle = "#777f8c";
  ctx.beginPath();
  ctx.arc(rawX, rawY, 3, 0, Math.PI * 2);
  ctx.fill();

  const [x, y] = cursor.snapped;
  ctx.strokeStyle = cursor.is_snapped ? "#56c98d" : "#d6dbe3";
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ctx.moveTo(x - 10, y);
  ctx.lineTo(x + 10, y);
  ctx.moveTo(x, y - 10);
  ctx.lineTo(x, y + 10);
  ctx.stroke();

  // dwell ring: the service's dwell_progress, never a local timer
  if (vm.dwellProgress > 0) {
    ctx.strokeStyle = "#e2b33c";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.arc(x, y, 16, -Math.PI / 2, -Math.PI / 2 + vm.dwellProgress * Math.PI * 2);
    ctx.stroke();
  }
}

function drawCalibration(): void {
  if (!vm.calibration.active) {
    return;
  }
  ctx.fillStyle = "rgba(10, 12, 16, 0.82)";
  ctx.fillRect(0, 0, SCREEN_W, SCREEN_H);
  ctx.fillStyle = "#4fa3ff";
  ctx.beginPath();
  ctx.arc(vm.calibration.x, vm.calibration.y, 9, 0, Math.PI * 2);
  ctx.fill();
  ctx.fillStyle = "#d6dbe3";
  ctx.font = "16px system-ui";
  ctx.textAlign = "center";
  ctx.fillText(
    `calibration point ${vm.calibration.index + 1} / ${vm.calibration.total} - hold gaze on the dot`,
    SCREEN_W / 2,
    SCREEN_H - 40,
  );
  ctx.textAlign = "left";
}

function renderPanel(): void {
  fields.robotStatus.textContent = vm.robot.status;
  fields.robotHeld.textContent = vm.robot.held ?? "-";
  fields.robotTcp.textContent =
    vm.robot.tcp === null ? "-" : vm.robot.tcp.map((v) => v.toFixed(3)).join(", ");
  fields.sid.textContent = vm.sid ?? "-";
  fields.phase.textContent = vm.phase;
  fields.dwell.textContent = `${Math.round(vm.dwellProgress * 100)}%`;
  fields.snap.textContent = vm.snapEnabled ? "on" : "off";
  fields.calib.textContent = vm.calibration.active
    ? `point ${vm.calibration.index + 1}/${vm.calibration.total}`
    : vm.calibration.residual !== null
      ? `rms ${vm.calibration.residual.toFixed(2)} px`
      : vm.calibrated
        ? "ready"
        : "none";
  snappingBox.checked = vm.snapEnabled;
  abortBtn.hidden = !vm.calibration.active;
  calibrateBtn.hidden = vm.calibration.active;

  if (vm.connection === "open" && vm.lastError === null) {
    banner.className = "banner ok";
    banner.textContent = `connected (${vm.sid ?? "starting"})`;
  } else if (vm.connection === "open") {
    banner.className = "banner";
    banner.textContent = vm.lastError!;
  } else {
    banner.className = "banner";
    banner.textContent =
      vm.connection === "reconnecting"
        ? `connection lost - reconnecting (attempt ${vm.attempt + 1})`
        : "connecting...";
  }

  if (vm.events !== renderedEvents) {
    renderedEvents = vm.events;
    eventsList.replaceChildren(
      ...vm.events.map((e) => {
        const li = document.createElement("li");
        li.textContent = `${(e.t / 1000).toFixed(1)}s ${e.text}`;
        return li;
      }),
    );
    eventsList.lastElementChild?.scrollIntoView({ block: "nearest" });
  }
}

function frame(): void {
  ctx.clearRect(0, 0, SCREEN_W, SCREEN_H);
  drawBoxes();
  drawCursor();
  drawCalibration();
  renderPanel();
  requestAnimationFrame(frame);
}

client.start();
requestAnimationFrame(frame);
