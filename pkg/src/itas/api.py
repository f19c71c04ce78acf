"""HTTP/JSON boundary over the session engine.

All state lives in the graph store and the per-session orchestrators; the
handlers only translate requests.  With a data directory configured, every
mutation persists the snapshot, the event log, the session registry, and
the action journals, so a restarted process answers read requests exactly
as the old one did.

Every failure surfaces as one of six error codes: validation_error,
unknown_session, session_completed, agent_unavailable, depth_exceeded,
parse_error.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .agents import AgentConfig, AgentError, RemoteAgentError, tool_call_to_dict
from .analytics import CensusReport, engagement_curve, intervals_from_log
from .events import (
    EventType,
    ParseError,
    RawEvent,
    ValidationError,
    decode_log_line,
)
from .graph import GraphStore, GraphError, loads_snapshot
from .ingest import (
    EventIngestor,
    IngestError,
    SessionClosed,
    SessionRecord,
    UnknownSession,
)
from .lesson import (
    DepthExceeded,
    LessonError,
    load_lesson_spec,
    rebuild_plan,
    traversal_order,
)
from .orchestrator import (
    EmptyMessage,
    JournalEntry,
    OrchestratorError,
    SessionCompleted,
    SessionOrchestrator,
    Tag,
    action_to_dict,
    create_session,
    reconstruct_session_state,
)

__all__ = [
    "ApiError",
    "ServiceConfig",
    "SessionService",
    "config_from_env",
    "create_app",
]

_FIXTURES = Path(__file__).parent / "fixtures"

SNAPSHOT_FILE = "graph.snap"
LOG_FILE = "events.log"
SESSIONS_FILE = "sessions.json"
JOURNAL_FILE = "journal.jsonl"


class ApiError(Exception):
    """A failure with a fixed HTTP status and machine-readable code."""

    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message

    def body(self) -> dict:
        return {"error": {"code": self.code, "message": self.message}}


def _now_ms() -> int:
    return int(time.time() * 1000)


@dataclass(slots=True)
class ServiceConfig:
    data_dir: str | Path | None = None
    agent: AgentConfig = field(default_factory=AgentConfig)
    token: str | None = None
    clock: Callable[[], int] = _now_ms


def config_from_env(environ: Mapping[str, str] | None = None) -> ServiceConfig:
    env = os.environ if environ is None else environ
    mode = env.get("ITAS_AGENT_MODE", "scripted")
    agent = AgentConfig(
        mode=mode,
        remote_endpoint=env.get("ITAS_AGENT_ENDPOINT"),
    )
    return ServiceConfig(
        data_dir=env.get("ITAS_DATA_DIR") or None,
        agent=agent,
        token=env.get("ITAS_TOKEN") or None,
    )


def _resolve_fixture(name: str) -> Path:
    candidate = Path(name)
    if candidate.is_file():
        return candidate
    bundled = _FIXTURES / f"{name}.json"
    if bundled.is_file():
        return bundled
    raise ApiError(400, "validation_error", f"unknown lesson fixture {name!r}")


_ENTITY_ROWS = ("User", "AIAssistant", "Assignment", "Lesson", "LessonStep", "Summary")


class SessionService:
    """The service core: one graph, one ingestor, many session orchestrators."""

    def __init__(self, config: ServiceConfig | None = None) -> None:
        self.config = config or config_from_env()
        self._clock = self.config.clock
        self._agent = self.config.agent.build()
        self._lock = threading.RLock()
        self._sessions: dict[str, SessionOrchestrator] = {}
        self._meta: dict[str, dict] = {}
        self._journal_flushed: dict[str, int] = {}
        self._last_wall = 0
        self._data = Path(self.config.data_dir) if self.config.data_dir else None
        if self._data is not None:
            self._data.mkdir(parents=True, exist_ok=True)
        if self._data is not None and (self._data / SNAPSHOT_FILE).exists():
            self._load()
        else:
            self.store = GraphStore(clock=self._clock)
            self.ingestor = EventIngestor(self.store, log_sink=self._append_log)

    # -- persistence ---------------------------------------------------------

    def _append_log(self, line: str) -> None:
        if self._data is None:
            return
        with open(self._data / LOG_FILE, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def _load(self) -> None:
        assert self._data is not None
        try:
            self.store = loads_snapshot(
                (self._data / SNAPSHOT_FILE).read_text(encoding="utf-8"),
                clock=self._clock,
            )
        except (ValueError, GraphError) as exc:
            raise ApiError(400, "parse_error", f"unusable snapshot: {exc}") from exc
        log_path = self._data / LOG_FILE
        lines = (
            [l for l in log_path.read_text(encoding="utf-8").splitlines() if l]
            if log_path.exists()
            else []
        )
        self.ingestor = EventIngestor.resume(
            self.store, lines, log_sink=self._append_log
        )
        if lines:
            _, last = decode_log_line(lines[-1])
            self._last_wall = last.wall_time
        journal_by_sid: dict[str, list[JournalEntry]] = {}
        journal_path = self._data / JOURNAL_FILE
        if journal_path.exists():
            for raw in journal_path.read_text(encoding="utf-8").splitlines():
                if not raw:
                    continue
                doc = json.loads(raw)
                journal_by_sid.setdefault(doc.pop("session_id"), []).append(
                    JournalEntry.from_dict(doc)
                )
        sessions_path = self._data / SESSIONS_FILE
        registry = (
            json.loads(sessions_path.read_text(encoding="utf-8"))
            if sessions_path.exists()
            else []
        )
        for meta in registry:
            record = SessionRecord(
                session_id=meta["session_id"],
                user_id=meta["user_id"],
                assistant_id=meta["assistant_id"],
                lesson_id=meta["lesson_id"],
                assignment_id=meta["assignment_id"],
                started_at=meta["started_at"],
                ended_at=meta["ended_at"],
            )
            self.ingestor.register_session(record)
            spec = load_lesson_spec(meta["lesson_fixture"])
            plan = rebuild_plan(self.store, record.lesson_id, spec)
            state = reconstruct_session_state(plan, record, lines)
            journal = journal_by_sid.get(record.session_id, [])
            self._sessions[record.session_id] = SessionOrchestrator(
                self.store,
                self.ingestor,
                plan,
                self._agent,
                record,
                clock=self._clock,
                state=state,
                journal=journal,
            )
            self._meta[record.session_id] = dict(meta)
            self._journal_flushed[record.session_id] = len(journal)

    def _persist(self, session_id: str | None = None) -> None:
        if self._data is None:
            return
        if session_id is not None:
            orch = self._sessions[session_id]
            flushed = self._journal_flushed.get(session_id, 0)
            fresh = orch.poll_updates(flushed)
            if fresh:
                with open(self._data / JOURNAL_FILE, "a", encoding="utf-8") as fh:
                    for entry in fresh:
                        doc = {"session_id": session_id, **entry.to_dict()}
                        fh.write(json.dumps(doc, separators=(",", ":")) + "\n")
                self._journal_flushed[session_id] = flushed + len(fresh)
        registry = []
        for sid, meta in self._meta.items():
            record = self._sessions[sid].state.record
            registry.append(
                {
                    **meta,
                    "started_at": record.started_at,
                    "ended_at": record.ended_at,
                }
            )
        (self._data / SESSIONS_FILE).write_text(
            json.dumps(registry, indent=1), encoding="utf-8"
        )
        (self._data / SNAPSHOT_FILE).write_text(
            json.dumps(self.store.export_snapshot(), separators=(",", ":")),
            encoding="utf-8",
        )

    # -- plumbing -------------------------------------------------------------

    def _next_wall(self) -> int:
        with self._lock:
            wall = max(self._clock(), self._last_wall)
            self._last_wall = wall
            return wall

    def _orchestrator(self, session_id: str) -> SessionOrchestrator:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise ApiError(
                404, "unknown_session", f"no session {session_id!r}"
            ) from None

    def _resolve_target(self, ref, orch: SessionOrchestrator) -> int | None:
        if ref is None:
            return None
        if isinstance(ref, int):
            return ref
        record = orch.state.record
        named = {
            "user": record.user_id,
            "assistant": record.assistant_id,
            "lesson": record.lesson_id,
            "assignment": record.assignment_id,
        }
        if ref in named:
            return named[ref]
        if isinstance(ref, str) and ref.startswith("step:"):
            main_ids = orch.plan.main_step_ids
            try:
                index = int(ref.split(":", 1)[1])
            except ValueError:
                index = 0
            if 1 <= index <= len(main_ids):
                return main_ids[index - 1]
        raise ApiError(400, "validation_error", f"unknown entity reference {ref!r}")

    # -- operations ------------------------------------------------------------

    def create(self, user_name: str, lesson_fixture: str) -> dict:
        if not isinstance(user_name, str) or not user_name.strip():
            raise ApiError(400, "validation_error", "user_name must be non-empty")
        if not isinstance(lesson_fixture, str) or not lesson_fixture.strip():
            raise ApiError(400, "validation_error", "lesson_fixture must be non-empty")
        fixture = _resolve_fixture(lesson_fixture)
        spec = load_lesson_spec(fixture)
        with self._lock:
            session_id = f"s-{len(self._meta) + 1:04d}"
            orch = create_session(
                self.store,
                self.ingestor,
                self._agent,
                spec,
                session_id,
                user_name=user_name.strip(),
                clock=self._next_wall,
            )
            record = orch.state.record
            self._sessions[session_id] = orch
            self._meta[session_id] = {
                "session_id": session_id,
                "user_name": user_name.strip(),
                "lesson_fixture": str(fixture),
                "user_id": record.user_id,
                "assistant_id": record.assistant_id,
                "lesson_id": record.lesson_id,
                "assignment_id": record.assignment_id,
            }
            self._journal_flushed[session_id] = 0
            self._persist(session_id)
        return {
            "session_id": session_id,
            "plan": orch.plan_view(),
            "entities": {
                "user": record.user_id,
                "assistant": record.assistant_id,
                "lesson": record.lesson_id,
                "assignment": record.assignment_id,
            },
        }

    def record_event(self, session_id: str, body: dict) -> dict:
        orch = self._orchestrator(session_id)
        record = orch.state.record
        type_name = body.get("event_type")
        if not isinstance(type_name, str):
            raise ApiError(400, "validation_error", "event_type is required")
        try:
            event_type = EventType(type_name)
        except ValueError:
            raise ApiError(
                400, "validation_error", f"unknown event type {type_name!r}"
            ) from None
        actor = body.get("actor", "user")
        allowed_actors = {"user": record.user_id, "assistant": record.assistant_id}
        if actor in allowed_actors:
            actor_id = allowed_actors[actor]
        elif isinstance(actor, int):
            actor_id = actor
        else:
            raise ApiError(400, "validation_error", f"unknown actor {actor!r}")

        def number(key):
            value = body.get(key)
            if value is None:
                return None
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ApiError(400, "validation_error", f"{key} must be a number")
            return float(value)

        event = RawEvent(
            session_id=session_id,
            event_type=event_type,
            actor=actor_id,
            wall_time=self._next_wall(),
            target=self._resolve_target(body.get("target"), orch),
            video_time=number("video_time"),
            from_time=number("from_time"),
            to_time=number("to_time"),
            payload=body.get("payload"),
        )
        node = orch.record_event(event)
        self._persist(session_id)
        return {"event_node_id": node.id}

    def handle_tag(self, session_id: str, tag_name: str, text: str) -> dict:
        orch = self._orchestrator(session_id)
        try:
            tag = Tag(tag_name)
        except ValueError:
            raise ApiError(
                400, "validation_error", f"unknown tag {tag_name!r}"
            ) from None
        actions = orch.handle_tag(tag, text=text, at_ms=self._next_wall())
        self._persist(session_id)
        return {
            "actions": [action_to_dict(a) for a in actions],
            "state": orch.state_view(),
        }

    def handle_chat(self, session_id: str, text) -> dict:
        orch = self._orchestrator(session_id)
        if not isinstance(text, str):
            raise ApiError(400, "validation_error", "text must be a string")
        reply, _ = orch.handle_chat(text, at_ms=self._next_wall())
        self._persist(session_id)
        return {
            "reply": {
                "text": reply.text,
                "tool_calls": [tool_call_to_dict(c) for c in reply.tool_calls],
            },
            "state": orch.state_view(),
        }

    def plan(self, session_id: str) -> dict:
        return self._orchestrator(session_id).plan_view()

    def updates(self, session_id: str, since_seq: int) -> dict:
        if since_seq < 0:
            raise ApiError(400, "validation_error", "since_seq must be >= 0")
        entries = self._orchestrator(session_id).poll_updates(since_seq)
        return {
            "updates": [e.to_dict() for e in entries],
            "latest_seq": entries[-1].seq if entries else since_seq,
        }

    def engagement(self, session_id: str, bin_width_s: float) -> dict:
        orch = self._orchestrator(session_id)
        if bin_width_s <= 0:
            raise ApiError(400, "validation_error", "bin must be positive")
        video = orch.plan.spec.video
        if video is None:
            raise ApiError(
                400, "validation_error", "this lesson has no video resource"
            )
        reconstruction = intervals_from_log(
            self.ingestor.log_lines(), video.duration_s, session_id=session_id
        )
        curve = engagement_curve(
            reconstruction.intervals, bin_width_s, video.duration_s
        )
        return curve.to_dict()

    def report(self, session_id: str) -> dict:
        orch = self._orchestrator(session_id)
        record = orch.state.record
        entities = dict.fromkeys(_ENTITY_ROWS, 0)
        entities["User"] = 1
        entities["AIAssistant"] = 1
        entities["Assignment"] = 1 if record.assignment_id is not None else 0
        entities["Lesson"] = 1
        entities["LessonStep"] = len(traversal_order(orch.plan))
        entities["Summary"] = 1 if orch.state.summary_id is not None else 0
        events = {etype.value: 0 for etype in EventType}
        for line in self.ingestor.log_lines():
            _, event = decode_log_line(line)
            if event.session_id == session_id:
                events[event.event_type.value] += 1
        return CensusReport(entities, events).to_dict()

    def export(self) -> dict:
        return self.store.export_snapshot()


def _map_exception(exc: Exception) -> ApiError:
    if isinstance(exc, ApiError):
        return exc
    if isinstance(exc, UnknownSession):
        return ApiError(404, "unknown_session", str(exc))
    if isinstance(exc, (SessionCompleted, SessionClosed)):
        return ApiError(409, "session_completed", str(exc))
    if isinstance(exc, DepthExceeded):
        return ApiError(409, "depth_exceeded", str(exc))
    if isinstance(exc, RemoteAgentError):
        return ApiError(503, "agent_unavailable", str(exc))
    if isinstance(exc, ParseError):
        return ApiError(400, "parse_error", str(exc))
    if isinstance(
        exc,
        (
            EmptyMessage,
            ValidationError,
            OrchestratorError,
            IngestError,
            LessonError,
            GraphError,
            AgentError,
        ),
    ):
        return ApiError(400, "validation_error", str(exc))
    return ApiError(500, "validation_error", "internal failure")


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    service = SessionService(config)
    app = FastAPI(title="itas", docs_url=None, redoc_url=None)
    app.state.service = service
    token = service.config.token

    @app.middleware("http")
    async def check_token(request: Request, call_next):
        if token is not None:
            supplied = request.headers.get("authorization", "")
            if supplied != f"Bearer {token}":
                return JSONResponse(
                    status_code=401,
                    content={
                        "error": {
                            "code": "validation_error",
                            "message": "missing or invalid bearer token",
                        }
                    },
                )
        return await call_next(request)

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body())

    @app.exception_handler(RequestValidationError)
    async def body_error_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={
                "error": {"code": "validation_error", "message": str(exc)}
            },
        )

    @app.exception_handler(Exception)
    async def fallback_handler(request: Request, exc: Exception):
        err = _map_exception(exc)
        return JSONResponse(status_code=err.status, content=err.body())

    async def body_of(request: Request) -> dict:
        try:
            body = await request.json()
        except json.JSONDecodeError as exc:
            raise ApiError(400, "parse_error", f"body is not valid JSON: {exc}")
        if not isinstance(body, dict):
            raise ApiError(400, "validation_error", "body must be a JSON object")
        return body

    @app.post("/sessions", status_code=201)
    async def create_session_route(request: Request):
        body = await body_of(request)
        try:
            return service.create(
                body.get("user_name", ""), body.get("lesson_fixture", "")
            )
        except Exception as exc:
            raise _map_exception(exc)

    @app.post("/sessions/{session_id}/events", status_code=202)
    async def record_event_route(session_id: str, request: Request):
        body = await body_of(request)
        try:
            return service.record_event(session_id, body)
        except Exception as exc:
            raise _map_exception(exc)

    @app.post("/sessions/{session_id}/tags")
    async def tag_route(session_id: str, request: Request):
        body = await body_of(request)
        tag_name = body.get("tag")
        if not isinstance(tag_name, str):
            raise ApiError(400, "validation_error", "tag is required")
        try:
            return service.handle_tag(
                session_id, tag_name, str(body.get("text", ""))
            )
        except Exception as exc:
            raise _map_exception(exc)

    @app.post("/sessions/{session_id}/chat")
    async def chat_route(session_id: str, request: Request):
        body = await body_of(request)
        try:
            return service.handle_chat(session_id, body.get("text"))
        except Exception as exc:
            raise _map_exception(exc)

    @app.get("/sessions/{session_id}/plan")
    async def plan_route(session_id: str):
        return service.plan(session_id)

    @app.get("/sessions/{session_id}/updates")
    async def updates_route(session_id: str, since_seq: int = 0):
        return service.updates(session_id, since_seq)

    @app.get("/sessions/{session_id}/analytics/engagement")
    async def engagement_route(session_id: str, bin: float = 15.0):
        return service.engagement(session_id, bin)

    @app.get("/sessions/{session_id}/report")
    async def report_route(session_id: str):
        return service.report(session_id)

    @app.get("/graph/export")
    async def export_route():
        return service.export()

    return app
