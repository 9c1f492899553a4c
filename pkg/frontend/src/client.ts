/** WebSocket transport: one message per text frame, auto-reconnect.
 *
 * Sends are dropped unless the socket is open, so a disconnect mid-dwell
 * can never queue phantom commands for the next session.
 */

import { reconnectDelay } from "./backoff.js";
import { encodeLine, parseServerLine, type ClientMsg, type ServerMsg } from "./protocol.js";

export interface ClientHooks {
  onMessage(msg: ServerMsg): void;
  onStatus(status: "connecting" | "open" | "reconnecting", attempt: number): void;
}

export class ConsoleClient {
  private socket: WebSocket | null = null;
  private attempt = 0;
  private timer: number | null = null;
  private stopped = false;

  constructor(
    private readonly url: string,
    private readonly hooks: ClientHooks,
  ) {}

  start(): void {
    this.stopped = false;
    this.hooks.onStatus("connecting", 0);
    this.open();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    this.socket?.close();
    this.socket = null;
  }

  get connected(): boolean {
    return this.socket !== null && this.socket.readyState === WebSocket.OPEN;
  }

  send(msg: ClientMsg): boolean {
    if (!this.connected) {
      return false;
    }
    this.socket!.send(encodeLine(msg));
    return true;
  }

  private open(): void {
    const socket = new WebSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempt = 0;
      this.hooks.onStatus("open", 0);
    };
    socket.onmessage = (ev: MessageEvent) => {
      if (typeof ev.data !== "string") {
        return;
      }
      for (const line of ev.data.split("\n")) {
        if (line.trim() === "") {
          continue;
        }
        const msg = parseServerLine(line);
        if (msg !== null) {
          this.hooks.onMessage(msg);
        }
      }
    };
    socket.onclose = () => {
      if (this.stopped || this.socket !== socket) {
        return;
      }
      this.socket = null;
      this.hooks.onStatus("reconnecting", this.attempt);
      const delay = reconnectDelay(this.attempt);
      this.attempt += 1;
      this.timer = setTimeout(() => this.open(), delay) as unknown as number;
    };
    socket.onerror = () => {
      // close fires right after; reconnect is handled there
    };
  }
}
