"""WebSocket/HTTP service exposing live sessions to operator clients.

Each running session is stepped by an asyncio task; every step produces an
immutable snapshot dict that is fanned out to all connected sockets.  Commands
arrive as line-delimited JSON text frames and are funneled through the
session's command queue, so they apply atomically between steps.

Protocol (v=1, one JSON document per line):
  client -> server: {"v":1,"type":"command","command":...,"session":...,...}
  server -> client: {"v":1,"type":"snapshot"|"ack"|"error",...}
"""

from __future__ import annotations

import asyncio
import json
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse

from .patients import PatientModel, persona
from .reward import MAX_LEVEL
from .session import EngineParams, SessionDriver, SessionPlan, default_plan, save_trace

PROTOCOL_VERSION = 1
SNAPSHOT_EDA_WINDOW_S = 4.0

_CONTROL_COMMANDS = {"set_desired", "pause", "resume", "abort", "switch_method", "submit_suds"}


class ServiceError(ValueError):
    pass


class SessionHandle:
    """One live session: driver, status, latest snapshot, step task."""

    def __init__(
        self,
        session_id: str,
        driver: SessionDriver,
        pace_s: float = 0.0,
    ):
        self.id = session_id
        self.driver = driver
        self.pace_s = pace_s
        self.paused = False
        self.latest: Optional[dict] = None
        self.task: Optional[asyncio.Task] = None

    @property
    def status(self) -> str:
        d = self.driver
        if d.done:
            return "terminated" if d.outcome in ("safety-terminated", "operator-abort") else "completed"
        if not d.steps and d.t == 0.0:
            return "idle"
        phase = d.phase
        return "relaxing" if phase is not None and phase.kind == "relax" else "anxious"


def snapshot(handle: SessionHandle) -> dict:
    """Immutable wire view of the session after its most recent step."""
    d = handle.driver
    phase = d.phase
    in_anxious = phase is not None and phase.kind == "anxious"
    last = d.steps[-1] if d.steps else None
    showing = last is not None and (in_anxious or d.done)
    eda: list[list[float]] = []
    if d.eda_parts:
        block = d.eda_parts[-1]
        keep = block.t >= d.t - SNAPSHOT_EDA_WINDOW_S - 1e-9
        eda = [[round(float(t), 4), round(float(c), 4)] for t, c in zip(block.t[keep], block.conductance[keep])]
    return {
        "v": PROTOCOL_VERSION,
        "type": "snapshot",
        "session": handle.id,
        "t": d.t,
        "status": handle.status,
        "phase": None if phase is None else phase.kind,
        "config": list(last.config.values()) if showing else None,
        "estimate": last.estimate if showing else None,
        "desired": last.desired if showing else None,
        "reward": last.reward if showing else None,
        "action": (last.action.label() if last.action else None) if showing else None,
        "method": last.method if showing else None,
        "safety": {
            "terminal": d.outcome in ("safety-terminated", "operator-abort"),
            "outcome": d.outcome or "running",
        },
        "eda": eda,
    }


class ServerState:
    def __init__(self, trace_root: Path, allow_manual: bool = False):
        self.trace_root = Path(trace_root)
        self.allow_manual = allow_manual
        self.sessions: dict[str, SessionHandle] = {}
        self.subscribers: set[asyncio.Queue] = set()
        # Skip past ids already persisted under trace_root by earlier runs.
        taken = [
            int(p.name[1:])
            for p in self.trace_root.glob("s[0-9]*")
            if p.name[1:].isdigit()
        ]
        self._next_id = max(taken, default=0) + 1

    def new_id(self) -> str:
        sid = f"s{self._next_id:04d}"
        self._next_id += 1
        return sid

    def broadcast(self, message: dict) -> None:
        for q in list(self.subscribers):
            q.put_nowait(message)

    def start_session(self, spec: dict) -> SessionHandle:
        manual = bool(spec.get("manual", False))
        if manual and not self.allow_manual:
            raise ServiceError("manual-SUDs sessions are disabled; restart with --manual")
        plan = (
            SessionPlan.from_json(spec["plan"])
            if spec.get("plan")
            else default_plan(spec.get("first_adapter", "rl"))
        )
        model: Optional[PatientModel] = None
        source = spec.get("source")
        if source is not None:
            if isinstance(source, dict) and set(source) == {"persona"}:
                model = persona(int(source["persona"]))
            else:
                model = PatientModel.from_json(source)
        elif not manual:
            raise ServiceError("start_session needs a source (patient spec) unless manual=true")
        driver = SessionDriver(model, plan, EngineParams(), seed=int(spec.get("seed", 0)), manual=manual)
        handle = SessionHandle(self.new_id(), driver, pace_s=float(spec.get("pace_s", 0.0)))
        self.sessions[handle.id] = handle
        handle.task = asyncio.get_running_loop().create_task(self._run(handle))
        return handle

    async def _run(self, handle: SessionHandle) -> None:
        driver = handle.driver
        while not driver.done:
            if handle.paused:
                await asyncio.sleep(0.02)
                continue
            driver.step()
            snap = snapshot(handle)
            handle.latest = snap
            self.broadcast(snap)
            await asyncio.sleep(handle.pace_s)
        self._persist(handle)

    def _persist(self, handle: SessionHandle) -> None:
        target = self.trace_root / handle.id
        if target.exists():
            return
        try:
            save_trace(target, handle.driver.trace())
        except OSError:
            pass  # traces are best effort; the session itself already finished

    def dispatch(self, command: dict) -> dict:
        """Apply one command dict; returns the ack frame. Raises ServiceError."""
        kind = command.get("command")
        if kind == "start_session":
            handle = self.start_session(command)
            return _ack(kind, handle.id)
        if kind not in _CONTROL_COMMANDS:
            raise ServiceError(f"unknown command {kind!r}")
        sid = command.get("session")
        handle = self.sessions.get(sid)
        if handle is None:
            raise ServiceError(f"unknown session {sid!r}")
        if kind == "pause":
            handle.paused = True
        elif kind == "resume":
            handle.paused = False
        elif kind == "set_desired":
            level = int(command.get("level", -1))
            if not 0 <= level <= MAX_LEVEL:
                raise ServiceError(f"set_desired level {command.get('level')!r} outside 0..10")
            handle.driver.submit({"command": "set_desired", "level": level})
        elif kind == "switch_method":
            method = command.get("method")
            if method not in ("rl", "rules"):
                raise ServiceError(f"switch_method needs method 'rl' or 'rules', got {method!r}")
            handle.driver.submit({"command": "switch_method", "method": method})
        elif kind == "submit_suds":
            value = int(command.get("value", -1))
            if not 0 <= value <= 100:
                raise ServiceError(f"submit_suds value {command.get('value')!r} outside 0..100")
            handle.driver.submit({"command": "submit_suds", "value": value})
        elif kind == "abort":
            handle.driver.submit({"command": "abort"})
            handle.paused = False  # let the step loop observe the abort
        return _ack(kind, sid)


def _ack(command: str, session: Optional[str]) -> dict:
    return {"v": PROTOCOL_VERSION, "type": "ack", "command": command, "session": session}


def _error(message: str, session: Optional[str] = None) -> dict:
    return {"v": PROTOCOL_VERSION, "type": "error", "error": message, "session": session}


def create_app(
    trace_root: Path | str,
    allow_manual: bool = False,
    static_dir: Optional[Path | str] = None,
) -> FastAPI:
    state = ServerState(Path(trace_root), allow_manual=allow_manual)
    app = FastAPI(title="adaptive-exposure service")
    app.state.server = state

    @app.get("/sessions")
    def list_sessions() -> JSONResponse:
        return JSONResponse(
            {
                "v": PROTOCOL_VERSION,
                "sessions": [
                    {"id": h.id, "status": h.status, "snapshot": h.latest}
                    for h in state.sessions.values()
                ],
            }
        )

    @app.get("/traces/{trace_id}")
    def get_trace(trace_id: str) -> JSONResponse:
        if "/" in trace_id or trace_id.startswith("."):
            return JSONResponse(_error("bad trace id"), status_code=400)
        trace_dir = state.trace_root / trace_id
        if not (trace_dir / "meta.json").exists():
            return JSONResponse(_error(f"no trace {trace_id!r}"), status_code=404)
        archive: dict = {"v": PROTOCOL_VERSION, "id": trace_id, "files": {}}
        with open(trace_dir / "meta.json") as f:
            archive["meta"] = json.load(f)
        for name in ("steps.csv", "eda.csv", "suds.csv"):
            path = trace_dir / name
            if path.exists():
                archive["files"][name] = path.read_text()
        return JSONResponse(archive)

    if static_dir is not None:
        static_dir = Path(static_dir)

        @app.get("/")
        def index():
            index_path = static_dir / "index.html"
            if index_path.exists():
                return FileResponse(index_path)
            return PlainTextResponse("console not built", status_code=404)

        @app.get("/static/{name}")
        def static_file(name: str):
            path = static_dir / name
            if "/" in name or name.startswith(".") or not path.exists():
                return PlainTextResponse("not found", status_code=404)
            return FileResponse(path)

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket) -> None:
        await ws.accept()
        queue: asyncio.Queue = asyncio.Queue()
        state.subscribers.add(queue)
        controlled: Optional[str] = None

        async def sender() -> None:
            while True:
                msg = await queue.get()
                await ws.send_text(json.dumps(msg) + "\n")

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await ws.receive_text()
                for line in raw.splitlines():
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        command = json.loads(line)
                    except json.JSONDecodeError:
                        queue.put_nowait(_error("malformed JSON frame"))
                        continue
                    if not isinstance(command, dict) or command.get("type") != "command":
                        queue.put_nowait(_error("expected a command frame"))
                        continue
                    kind = command.get("command")
                    sid = command.get("session")
                    # One session controlled per connection; any number observed.
                    if kind in _CONTROL_COMMANDS:
                        if controlled is None:
                            controlled = sid
                        elif sid != controlled:
                            queue.put_nowait(
                                _error(f"this connection controls {controlled!r}; cannot steer {sid!r}", sid)
                            )
                            continue
                    try:
                        ack = state.dispatch(command)
                    except (ServiceError, ValueError, KeyError) as exc:
                        queue.put_nowait(_error(str(exc), sid))
                        continue
                    if kind == "start_session" and controlled is None:
                        controlled = ack["session"]
                    queue.put_nowait(ack)
        except WebSocketDisconnect:
            pass
        finally:
            state.subscribers.discard(queue)
            send_task.cancel()

    return app
