"""Network front ends for sessions: a TCP line server and a WebSocket bridge.

Both transports speak the session wire protocol verbatim: one JSON message
per line (or per WebSocket text frame), one isolated Session per
connection. The pipeline itself stays event-time pure; the only wall-clock
code lives here, in the pacing loop that injects synthetic tick messages
so robot motion and heartbeats continue while a live client is quiet.
Injected ticks are logged as inbound lines, which keeps every served log
replayable byte for byte.
"""

from __future__ import annotations

import asyncio
import time
from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .config import AppConfig, load_config
from .session import Session, encode, identity_model

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8754


class _Connection:
    """Serialize session access between the reader loop and the pacer."""

    def __init__(self, session: Session, log_path: Path | None) -> None:
        self.session = session
        self.lock = asyncio.Lock()
        self.wall_at_last_inbound = time.monotonic()
        self._log = open(log_path, "w", encoding="utf-8") if log_path else None
        self._logged = 0

    def _record(self) -> None:
        if self._log is None:
            return
        for direction, line in self.session.log[self._logged :]:
            self._log.write(f"{direction} {line}\n")
        self._logged = len(self.session.log)

    def process(self, line: str) -> list[str]:
        out = self.session.handle_line(line)
        self.wall_at_last_inbound = time.monotonic()
        self._record()
        return out

    def pace_line(self) -> str:
        """A synthetic tick continuing event time at wall-clock rate."""
        elapsed_ms = (time.monotonic() - self.wall_at_last_inbound) * 1000.0
        return encode({"type": "tick", "t": self.session.clock_ms + elapsed_ms})

    def close(self) -> None:
        if self._log is not None:
            self._record()
            self._log.close()
            self._log = None


class LineServer:
    """TCP server: one session per connection, newline-framed messages."""

    def __init__(
        self,
        host: str = DEFAULT_HOST,
        port: int = DEFAULT_PORT,
        config: AppConfig | None = None,
        model: str = "identity",
        log_dir: str | None = None,
        pace_hz: float | None = None,
    ) -> None:
        self.host = host
        self.port = port
        self.config = config or load_config()
        self.model_mode = model
        self.log_dir = Path(log_dir) if log_dir else None
        self.pace_hz = self.config.pipeline.hz if pace_hz is None else pace_hz
        self._server: asyncio.base_events.Server | None = None
        self._counter = 0
        self._connections: set[_Connection] = set()
        self._tasks: set[asyncio.Task] = set()

    def _make_session(self) -> Session:
        self._counter += 1
        sid = f"s{self._counter:04d}"
        model = None
        if self.model_mode == "identity":
            screen = self.config.screen
            model = identity_model(screen.w, screen.h)
        return Session(sid=sid, config=self.config, model=model)

    def _open_connection(self) -> _Connection:
        session = self._make_session()
        log_path = None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            log_path = self.log_dir / f"{session.sid}.log"
        conn = _Connection(session, log_path)
        self._connections.add(conn)
        return conn

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._handle, self.host, self.port)
        if self.port == 0:
            self.port = self._server.sockets[0].getsockname()[1]

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        async with self._server:
            await self._server.serve_forever()

    async def stop(self) -> None:
        for task in list(self._tasks):
            task.cancel()
        if self._tasks:
            await asyncio.gather(*self._tasks, return_exceptions=True)
        for conn in list(self._connections):
            conn.close()
        self._connections.clear()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn = self._open_connection()
        write_lock = asyncio.Lock()

        async def send(lines: list[str]) -> None:
            if not lines:
                return
            async with write_lock:
                writer.write(("".join(f"{l}\n" for l in lines)).encode("utf-8"))
                await writer.drain()

        pacer = None
        if self.pace_hz > 0:
            pacer = asyncio.create_task(self._pace(conn, send))
            self._tasks.add(pacer)
        try:
            while True:
                raw = await reader.readline()
                if not raw:
                    break
                line = raw.decode("utf-8", errors="replace")
                async with conn.lock:
                    out = conn.process(line)
                await send(out)
        except (ConnectionResetError, asyncio.CancelledError):
            pass
        finally:
            if pacer is not None:
                pacer.cancel()
                self._tasks.discard(pacer)
            conn.close()
            self._connections.discard(conn)
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionResetError, BrokenPipeError):
                pass

    async def _pace(self, conn: _Connection, send) -> None:
        period = 1.0 / self.pace_hz
        try:
            while True:
                await asyncio.sleep(period)
                async with conn.lock:
                    out = conn.process(conn.pace_line())
                await send(out)
        except asyncio.CancelledError:
            pass
        except (ConnectionResetError, BrokenPipeError):
            pass


def build_app(
    config: AppConfig | None = None,
    model: str = "identity",
    log_dir: str | None = None,
    pace_hz: float | None = None,
    static_dir: str | None = None,
):
    """The WebSocket bridge: /ws speaks the line protocol, one session per
    socket; a console bundle can be mounted at / from static_dir."""
    config = config or load_config()
    rate = config.pipeline.hz if pace_hz is None else pace_hz
    app = FastAPI(title="gazepick")
    counter = {"n": 0}
    log_root = Path(log_dir) if log_dir else None

    @app.get("/healthz")
    async def healthz():
        return {"ok": True}

    @app.websocket("/ws")
    async def ws_endpoint(socket: WebSocket):
        await socket.accept()
        counter["n"] += 1
        sid = f"w{counter['n']:04d}"
        model_obj = None
        if model == "identity":
            model_obj = identity_model(config.screen.w, config.screen.h)
        session = Session(sid=sid, config=config, model=model_obj)
        log_path = None
        if log_root is not None:
            log_root.mkdir(parents=True, exist_ok=True)
            log_path = log_root / f"{sid}.log"
        conn = _Connection(session, log_path)

        async def send(lines: list[str]) -> None:
            for line in lines:
                await socket.send_text(line)

        async def pace() -> None:
            try:
                while True:
                    await asyncio.sleep(1.0 / rate)
                    async with conn.lock:
                        out = conn.process(conn.pace_line())
                    await send(out)
            except (asyncio.CancelledError, WebSocketDisconnect, RuntimeError):
                pass

        pacer = asyncio.create_task(pace()) if rate > 0 else None
        try:
            while True:
                line = await socket.receive_text()
                async with conn.lock:
                    out = conn.process(line)
                await send(out)
        except WebSocketDisconnect:
            pass
        finally:
            if pacer is not None:
                pacer.cancel()
            conn.close()

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")
    return app


async def run_tcp_server(
    host: str,
    port: int,
    config: AppConfig | None = None,
    model: str = "identity",
    log_dir: str | None = None,
    pace_hz: float | None = None,
) -> None:
    server = LineServer(host, port, config=config, model=model, log_dir=log_dir, pace_hz=pace_hz)
    await server.serve_forever()
