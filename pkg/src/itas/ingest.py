"""Event ingestion, journaling, and log replay.

The ingestor is the only write path for interaction events.  Each accepted
event becomes one Event node (timestamped with the event's own wall time),
one PERFORMED edge from the acting entity, at most one TARGETS edge, and one
appended log line.  Rejected events change nothing.

A session's event stream is bracketed: LessonStart comes first, LessonEnd
(if present) last, and wall times never go backwards.  Replay reverses the
journaling: given the structural half of a snapshot (entities and plan
edges, no events) plus the log, it rebuilds a graph whose census and event
trace match the live-ingested one.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable, Iterable

from .events import (
    EventType,
    ParseError,
    RawEvent,
    decode_log_line,
    encode_log_line,
    validate_event,
)
from .graph import EdgeKind, GraphStore, NodeKind, UnknownNode

__all__ = [
    "SessionRecord",
    "EventIngestor",
    "IngestError",
    "UnknownSession",
    "DuplicateLessonStart",
    "SessionNotStarted",
    "SessionClosed",
    "OutOfOrderTimestamp",
    "replay_log",
    "structural_baseline",
    "event_trace",
]


class IngestError(Exception):
    """Base class for ingestion rejections."""


class UnknownSession(IngestError):
    """Event references a session id that was never registered."""


class DuplicateLessonStart(IngestError):
    """A session may carry exactly one LessonStart."""


class SessionNotStarted(IngestError):
    """Events before LessonStart are rejected to keep sessions bracketed."""


class SessionClosed(IngestError):
    """Events after LessonEnd are rejected to keep sessions bracketed."""


class OutOfOrderTimestamp(IngestError):
    """wall_time must be non-decreasing within the log."""


@dataclass(slots=True)
class SessionRecord:
    """Bookkeeping for one tutoring session's graph entities."""

    session_id: str
    user_id: int
    assistant_id: int
    lesson_id: int
    assignment_id: int | None = None
    started_at: int | None = None
    ended_at: int | None = None


class EventIngestor:
    """Single writer for interaction events against one graph.

    Args:
        store: the graph all sessions share.
        log_sink: called with each appended log line (no newline); wire a
            file appender here for durability.  Lines are always retained
            in memory as well and available via :meth:`log_lines`.
    """

    def __init__(
        self, store: GraphStore, log_sink: Callable[[str], None] | None = None
    ) -> None:
        self._store = store
        self._log_sink = log_sink
        self._lock = threading.Lock()
        self._sessions: dict[str, SessionRecord] = {}
        self._lines: list[str] = []
        self._seq = 0
        self._last_wall: int | None = None

    @property
    def store(self) -> GraphStore:
        return self._store

    @classmethod
    def resume(
        cls,
        store: GraphStore,
        lines: Iterable[str],
        log_sink: Callable[[str], None] | None = None,
    ) -> "EventIngestor":
        """Pick up journaling where a previous process left off.

        ``store`` must already hold the materialized events (a re-imported
        snapshot); ``lines`` is the existing log.  Sequence numbers and the
        wall-time watermark continue from the log head.  Sessions are
        registered separately, with their bracket timestamps intact.
        """
        ingestor = cls(store, log_sink)
        ingestor._lines = list(lines)
        ingestor._seq = len(ingestor._lines)
        if ingestor._lines:
            _, last_event = decode_log_line(ingestor._lines[-1])
            ingestor._last_wall = last_event.wall_time
        return ingestor

    def register_session(self, record: SessionRecord) -> None:
        with self._lock:
            if record.session_id in self._sessions:
                raise IngestError(f"session {record.session_id!r} already registered")
            self._sessions[record.session_id] = record

    def session(self, session_id: str) -> SessionRecord:
        with self._lock:
            try:
                return self._sessions[session_id]
            except KeyError:
                raise UnknownSession(f"no session {session_id!r}") from None

    def sessions(self) -> list[SessionRecord]:
        with self._lock:
            return list(self._sessions.values())

    def log_lines(self) -> list[str]:
        with self._lock:
            return list(self._lines)

    def ingest(self, event: RawEvent):
        """Validate, journal, and materialize one event.

        Returns the created Event node.  Raises (and leaves the graph and
        log untouched) on any validation, session, or ordering violation.
        """
        validate_event(event)
        with self._lock:
            record = self._sessions.get(event.session_id)
            if record is None:
                raise UnknownSession(f"no session {event.session_id!r}")
            if event.event_type is EventType.LESSON_START:
                if record.started_at is not None:
                    raise DuplicateLessonStart(
                        f"session {event.session_id!r} already started"
                    )
            else:
                if record.started_at is None:
                    raise SessionNotStarted(
                        f"session {event.session_id!r} has no LessonStart yet"
                    )
                if record.ended_at is not None:
                    raise SessionClosed(f"session {event.session_id!r} already ended")
            if self._last_wall is not None and event.wall_time < self._last_wall:
                raise OutOfOrderTimestamp(
                    f"wall_time {event.wall_time} precedes log head {self._last_wall}"
                )
            # Endpoint existence before any mutation, so a rejection is a no-op.
            self._store.node(event.actor)
            if event.target is not None:
                self._store.node(event.target)

            node = _materialize(self._store, event)
            self._seq += 1
            line = encode_log_line(self._seq, event)
            self._lines.append(line)
            self._last_wall = event.wall_time
            if event.event_type is EventType.LESSON_START:
                record.started_at = event.wall_time
            elif event.event_type is EventType.LESSON_END:
                record.ended_at = event.wall_time
        if self._log_sink is not None:
            self._log_sink(line)
        return node


def _materialize(store: GraphStore, event: RawEvent):
    node = store.add_node(
        NodeKind.event(event.event_type),
        props=event.props(),
        created_at=event.wall_time,
    )
    store.add_edge(EdgeKind.PERFORMED, event.actor, node.id, created_at=event.wall_time)
    if event.target is not None:
        store.add_edge(EdgeKind.TARGETS, node.id, event.target, created_at=event.wall_time)
    return node


def replay_log(lines: Iterable[str], base: GraphStore | None = None) -> GraphStore:
    """Re-materialize logged events onto ``base`` and return the graph.

    ``base`` holds the structural half of the record (entities and plan
    edges); see :func:`structural_baseline`.  An empty log returns ``base``
    unchanged.  The same bracketing and ordering rules as live ingestion
    apply, so a log that replays cleanly is also one live ingestion would
    have accepted.

    Raises:
        ParseError: malformed line, gap in seq, or unknown event type; the
            message carries the 1-based line number.
        OutOfOrderTimestamp: wall_time goes backwards.
        UnknownNode: an event references an entity absent from ``base``.
    """
    store = base if base is not None else GraphStore()
    started: dict[str, bool] = {}
    ended: set[str] = set()
    last_wall: int | None = None
    expected_seq = 1
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            seq, event = decode_log_line(line)
        except ParseError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if seq != expected_seq:
            raise ParseError(f"line {lineno}: seq {seq}, expected {expected_seq}")
        expected_seq += 1
        if last_wall is not None and event.wall_time < last_wall:
            raise OutOfOrderTimestamp(
                f"line {lineno}: wall_time {event.wall_time} precedes {last_wall}"
            )
        last_wall = event.wall_time
        sid = event.session_id
        if event.event_type is EventType.LESSON_START:
            if started.get(sid):
                raise DuplicateLessonStart(f"line {lineno}: session {sid!r}")
            started[sid] = True
        else:
            if not started.get(sid):
                raise SessionNotStarted(f"line {lineno}: session {sid!r}")
            if sid in ended:
                raise SessionClosed(f"line {lineno}: session {sid!r}")
            if event.event_type is EventType.LESSON_END:
                ended.add(sid)
        store.node(event.actor)
        if event.target is not None:
            store.node(event.target)
        _materialize(store, event)
    return store


def structural_baseline(document: dict) -> dict:
    """Strip Event nodes (and edges touching them) from a snapshot document.

    The result is the structural half of the record: what replay needs as
    its base.  The input document is not modified.
    """
    nodes = document.get("nodes", [])
    edges = document.get("edges", [])
    event_ids = {
        n["id"] for n in nodes if str(n.get("kind", "")).startswith("Event:")
    }
    return {
        "schema_version": document.get("schema_version"),
        "nodes": [dict(n) for n in nodes if n["id"] not in event_ids],
        "edges": [
            dict(e)
            for e in edges
            if e["from"] not in event_ids and e["to"] not in event_ids
        ],
    }


def event_trace(store: GraphStore) -> list[tuple[str, int, int | None, tuple]]:
    """Flatten a graph's events for comparison across ingest paths.

    Returns, in ingestion order, one tuple per event node: its type label,
    the PERFORMED actor id, the TARGETS target id (or None), and the node
    props as a sorted item tuple.  Two graphs that agree on this trace and
    on their structural halves describe the same session history, whatever
    raw ids they use for the event nodes.
    """
    trace = []
    for node in store.nodes():
        if not node.kind.is_event:
            continue
        performers = store.in_edges(node.id, EdgeKind.PERFORMED)
        targets = store.out_edges(node.id, EdgeKind.TARGETS)
        trace.append(
            (
                node.kind.label,
                performers[0].src if performers else -1,
                targets[0].dst if targets else None,
                tuple(sorted(node.props.items())),
            )
        )
    return trace
