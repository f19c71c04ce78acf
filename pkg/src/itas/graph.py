"""Embedded typed property graph with append-only semantics.

The graph is the single durable record of everything a tutoring session
produces: the people and artifacts involved (entity nodes), the lesson
structure (structural edges), and every interaction (event nodes hanging off
the entities they touch).  Nodes and edges are never deleted or mutated in
place; corrections arrive as new events.

Concurrency contract: one writer, many readers.  All mutation goes through a
single lock; read methods take the same lock briefly to copy, so a reader
always sees a consistent prefix of the write history.

Persistence is a JSON snapshot document::

    {"schema_version": 1, "nodes": [...], "edges": [...]}

where each node is ``{"id", "kind", "created_at", "props"}`` and each edge is
``{"id", "kind", "from", "to", "created_at", "props"}``.  Export of an
imported snapshot reproduces the original bytes.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from enum import Enum, unique
from typing import Callable

from .events import EventType

__all__ = [
    "SCHEMA_VERSION",
    "NodeKind",
    "EdgeKind",
    "Node",
    "Edge",
    "GraphStore",
    "GraphError",
    "InvalidProps",
    "UnknownNode",
    "DuplicateEdge",
    "SchemaMismatch",
    "IntegrityError",
    "PropValue",
    "dumps_snapshot",
    "loads_snapshot",
]

SCHEMA_VERSION = 1

PropValue = str | int | float | bool

_ENTITY_CATEGORIES = (
    "User",
    "AIAssistant",
    "Assignment",
    "Lesson",
    "LessonStep",
    "Summary",
)
_EVENT_CATEGORY = "Event"


class GraphError(Exception):
    """Base class for graph violations."""


class InvalidProps(GraphError):
    """A props mapping has non-string keys or non-scalar values."""


class UnknownNode(GraphError):
    """A node id does not exist in this graph."""


class DuplicateEdge(GraphError):
    """A structural edge with the same (kind, from, to) already exists."""


class SchemaMismatch(GraphError):
    """A snapshot was written under a different schema version."""


class IntegrityError(GraphError):
    """A snapshot references nodes or ids inconsistently."""


@dataclass(frozen=True, slots=True)
class NodeKind:
    """A node's type: one of six entity categories, or an event.

    Event nodes carry the concrete :class:`~itas.events.EventType`; entity
    nodes do not.  The wire label is the category name for entities and
    ``Event:<type>`` for events.
    """

    category: str
    event_type: EventType | None = None

    def __post_init__(self) -> None:
        if self.category == _EVENT_CATEGORY:
            if self.event_type is None:
                raise ValueError("Event kind requires an event_type")
        elif self.category in _ENTITY_CATEGORIES:
            if self.event_type is not None:
                raise ValueError(f"{self.category} kind does not take an event_type")
        else:
            raise ValueError(f"unknown node category: {self.category!r}")

    @property
    def is_event(self) -> bool:
        return self.event_type is not None

    @property
    def label(self) -> str:
        if self.event_type is not None:
            return f"{_EVENT_CATEGORY}:{self.event_type.value}"
        return self.category

    @classmethod
    def event(cls, event_type: EventType) -> "NodeKind":
        return cls(_EVENT_CATEGORY, event_type)

    @classmethod
    def parse(cls, label: str) -> "NodeKind":
        """Inverse of :attr:`label`.  Raises ValueError on unknown labels."""
        if label.startswith(_EVENT_CATEGORY + ":"):
            return cls.event(EventType(label.split(":", 1)[1]))
        return cls(label)

    def __str__(self) -> str:  # pragma: no cover - debugging nicety
        return self.label


NodeKind.USER = NodeKind("User")  # type: ignore[attr-defined]
NodeKind.AI_ASSISTANT = NodeKind("AIAssistant")  # type: ignore[attr-defined]
NodeKind.ASSIGNMENT = NodeKind("Assignment")  # type: ignore[attr-defined]
NodeKind.LESSON = NodeKind("Lesson")  # type: ignore[attr-defined]
NodeKind.LESSON_STEP = NodeKind("LessonStep")  # type: ignore[attr-defined]
NodeKind.SUMMARY = NodeKind("Summary")  # type: ignore[attr-defined]


@unique
class EdgeKind(str, Enum):
    """Edge vocabulary.  Structural kinds are unique per (kind, from, to);
    the event-attached kinds PERFORMED and TARGETS may repeat."""

    HAS_STEP = "HAS_STEP"
    NEXT_STEP = "NEXT_STEP"
    SUB_STEP_OF = "SUB_STEP_OF"
    RETURNS_FROM_SUB_STEP = "RETURNS_FROM_SUB_STEP"
    PLAN_STEP_INFORMED_BY = "PLAN_STEP_INFORMED_BY"
    CURRENT_STEP = "CURRENT_STEP"
    HAS_SUMMARY = "HAS_SUMMARY"
    PERFORMED = "PERFORMED"
    TARGETS = "TARGETS"


EVENT_ATTACHED_EDGES: frozenset[EdgeKind] = frozenset(
    {EdgeKind.PERFORMED, EdgeKind.TARGETS}
)


@dataclass(frozen=True, slots=True)
class Node:
    id: int
    kind: NodeKind
    created_at: int
    props: dict[str, PropValue] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class Edge:
    id: int
    kind: EdgeKind
    src: int
    dst: int
    created_at: int
    props: dict[str, PropValue] = field(default_factory=dict)


def _default_clock() -> int:
    return int(time.time() * 1000)


def _check_props(props: dict[str, PropValue] | None) -> dict[str, PropValue]:
    if props is None:
        return {}
    if not isinstance(props, dict):
        raise InvalidProps("props must be a mapping")
    for key, value in props.items():
        if not isinstance(key, str) or not key:
            raise InvalidProps(f"prop keys must be non-empty strings, got {key!r}")
        if not isinstance(value, (str, int, float, bool)):
            raise InvalidProps(
                f"prop {key!r} must be a string, int, float, or bool, got {type(value).__name__}"
            )
    return dict(props)


class GraphStore:
    """In-process property graph.  See the module docstring for semantics.

    Args:
        clock: returns the current time as epoch milliseconds.  Injected so
            simulated runs produce identical timestamps on every execution.
    """

    def __init__(self, clock: Callable[[], int] | None = None) -> None:
        self._clock = clock or _default_clock
        self._lock = threading.RLock()
        self._nodes: dict[int, Node] = {}
        self._edges: dict[int, Edge] = {}
        self._out: dict[int, list[int]] = {}
        self._in: dict[int, list[int]] = {}
        self._structural: set[tuple[EdgeKind, int, int]] = set()
        self._next_node_id = 1
        self._next_edge_id = 1

    # -- mutation ---------------------------------------------------------

    def add_node(
        self,
        kind: NodeKind,
        props: dict[str, PropValue] | None = None,
        created_at: int | None = None,
    ) -> Node:
        """Append a node and return it.

        ``created_at`` defaults to the injected clock; event materialization
        passes the event's own wall time instead so that a replayed graph
        carries the same timestamps as the live one.
        """
        if not isinstance(kind, NodeKind):
            raise GraphError(f"kind must be a NodeKind, got {type(kind).__name__}")
        clean = _check_props(props)
        with self._lock:
            node = Node(
                id=self._next_node_id,
                kind=kind,
                created_at=self._clock() if created_at is None else created_at,
                props=clean,
            )
            self._next_node_id += 1
            self._nodes[node.id] = node
            self._out[node.id] = []
            self._in[node.id] = []
        return node

    def add_edge(
        self,
        kind: EdgeKind,
        src: int,
        dst: int,
        props: dict[str, PropValue] | None = None,
        created_at: int | None = None,
    ) -> Edge:
        """Append an edge from ``src`` to ``dst`` and return it.

        Raises:
            UnknownNode: if either endpoint does not exist.
            DuplicateEdge: if ``kind`` is structural and an edge with the
                same endpoints already exists.
        """
        if not isinstance(kind, EdgeKind):
            raise GraphError(f"kind must be an EdgeKind, got {type(kind).__name__}")
        clean = _check_props(props)
        with self._lock:
            for endpoint in (src, dst):
                if endpoint not in self._nodes:
                    raise UnknownNode(f"no node with id {endpoint}")
            key = (kind, src, dst)
            if kind not in EVENT_ATTACHED_EDGES and key in self._structural:
                raise DuplicateEdge(f"{kind.value} edge {src}->{dst} already exists")
            edge = Edge(
                id=self._next_edge_id,
                kind=kind,
                src=src,
                dst=dst,
                created_at=self._clock() if created_at is None else created_at,
                props=clean,
            )
            self._next_edge_id += 1
            self._edges[edge.id] = edge
            self._out[src].append(edge.id)
            self._in[dst].append(edge.id)
            if kind not in EVENT_ATTACHED_EDGES:
                self._structural.add(key)
        return edge

    # -- reads ------------------------------------------------------------

    def node(self, node_id: int) -> Node:
        with self._lock:
            try:
                return self._nodes[node_id]
            except KeyError:
                raise UnknownNode(f"no node with id {node_id}") from None

    def has_edge(self, kind: EdgeKind, src: int, dst: int) -> bool:
        with self._lock:
            if kind not in EVENT_ATTACHED_EDGES:
                return (kind, src, dst) in self._structural
            return any(
                self._edges[eid].kind is kind and self._edges[eid].dst == dst
                for eid in self._out.get(src, ())
            )

    def nodes(self, kind: NodeKind | None = None) -> list[Node]:
        """All nodes in insertion order, optionally filtered by exact kind."""
        with self._lock:
            everything = list(self._nodes.values())
        if kind is None:
            return everything
        return [n for n in everything if n.kind == kind]

    def edges(self, kind: EdgeKind | None = None) -> list[Edge]:
        with self._lock:
            everything = list(self._edges.values())
        if kind is None:
            return everything
        return [e for e in everything if e.kind is kind]

    def out_edges(self, node_id: int, kind: EdgeKind | None = None) -> list[Edge]:
        with self._lock:
            if node_id not in self._nodes:
                raise UnknownNode(f"no node with id {node_id}")
            found = [self._edges[eid] for eid in self._out[node_id]]
        if kind is None:
            return found
        return [e for e in found if e.kind is kind]

    def in_edges(self, node_id: int, kind: EdgeKind | None = None) -> list[Edge]:
        with self._lock:
            if node_id not in self._nodes:
                raise UnknownNode(f"no node with id {node_id}")
            found = [self._edges[eid] for eid in self._in[node_id]]
        if kind is None:
            return found
        return [e for e in found if e.kind is kind]

    def neighbors(
        self,
        node_id: int,
        kind: EdgeKind | None = None,
        direction: str = "out",
    ) -> list[Node]:
        """Adjacent nodes, ordered by edge creation.

        ``direction`` is ``"out"`` (follow edges leaving the node), ``"in"``
        (edges arriving), or ``"both"`` (outgoing then incoming).
        """
        if direction not in ("out", "in", "both"):
            raise ValueError(f"direction must be out, in, or both, got {direction!r}")
        picked: list[Edge] = []
        if direction in ("out", "both"):
            picked.extend(self.out_edges(node_id, kind))
        if direction in ("in", "both"):
            picked.extend(self.in_edges(node_id, kind))
        picked.sort(key=lambda e: e.id)
        with self._lock:
            return [
                self._nodes[e.dst if e.src == node_id else e.src] for e in picked
            ]

    def count_by_kind(self) -> dict[NodeKind, int]:
        """Node census: exact kind (entity category or event type) to count."""
        counts: dict[NodeKind, int] = {}
        for node in self.nodes():
            counts[node.kind] = counts.get(node.kind, 0) + 1
        return counts

    def next_ids(self) -> tuple[int, int]:
        """The (node, edge) ids the next inserts will take.  Diagnostic."""
        with self._lock:
            return self._next_node_id, self._next_edge_id

    # -- persistence ------------------------------------------------------

    def export_snapshot(self) -> dict:
        """The full graph as a snapshot document (plain JSON-ready dict)."""
        with self._lock:
            nodes = list(self._nodes.values())
            edges = list(self._edges.values())
        return {
            "schema_version": SCHEMA_VERSION,
            "nodes": [
                {
                    "id": n.id,
                    "kind": n.kind.label,
                    "created_at": n.created_at,
                    "props": dict(n.props),
                }
                for n in nodes
            ],
            "edges": [
                {
                    "id": e.id,
                    "kind": e.kind.value,
                    "from": e.src,
                    "to": e.dst,
                    "created_at": e.created_at,
                    "props": dict(e.props),
                }
                for e in edges
            ],
        }

    @classmethod
    def import_snapshot(
        cls, document: dict, clock: Callable[[], int] | None = None
    ) -> "GraphStore":
        """Rebuild a graph from a snapshot document.

        Ids, timestamps, props, and ordering are preserved exactly, so a
        subsequent export reproduces the document byte for byte.

        Raises:
            SchemaMismatch: wrong or missing schema_version.
            IntegrityError: duplicate ids, dangling edge endpoints, or
                malformed records.
        """
        if not isinstance(document, dict):
            raise IntegrityError("snapshot must be a JSON object")
        if document.get("schema_version") != SCHEMA_VERSION:
            raise SchemaMismatch(
                f"expected schema_version {SCHEMA_VERSION}, "
                f"got {document.get('schema_version')!r}"
            )
        store = cls(clock=clock)
        with store._lock:
            for record in document.get("nodes", []):
                try:
                    node = Node(
                        id=record["id"],
                        kind=NodeKind.parse(record["kind"]),
                        created_at=record["created_at"],
                        props=_check_props(record.get("props") or {}),
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise IntegrityError(f"bad node record: {exc}") from None
                if node.id in store._nodes:
                    raise IntegrityError(f"duplicate node id {node.id}")
                store._nodes[node.id] = node
                store._out[node.id] = []
                store._in[node.id] = []
            for record in document.get("edges", []):
                try:
                    edge = Edge(
                        id=record["id"],
                        kind=EdgeKind(record["kind"]),
                        src=record["from"],
                        dst=record["to"],
                        created_at=record["created_at"],
                        props=_check_props(record.get("props") or {}),
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise IntegrityError(f"bad edge record: {exc}") from None
                if edge.id in store._edges:
                    raise IntegrityError(f"duplicate edge id {edge.id}")
                if edge.src not in store._nodes or edge.dst not in store._nodes:
                    raise IntegrityError(
                        f"edge {edge.id} references a missing node"
                    )
                key = (edge.kind, edge.src, edge.dst)
                if edge.kind not in EVENT_ATTACHED_EDGES:
                    if key in store._structural:
                        raise IntegrityError(
                            f"duplicate structural edge {edge.kind.value} "
                            f"{edge.src}->{edge.dst}"
                        )
                    store._structural.add(key)
                store._edges[edge.id] = edge
                store._out[edge.src].append(edge.id)
                store._in[edge.dst].append(edge.id)
            if store._nodes:
                store._next_node_id = max(store._nodes) + 1
            if store._edges:
                store._next_edge_id = max(store._edges) + 1
        return store


def dumps_snapshot(store: GraphStore) -> str:
    """Serialize a graph to its canonical snapshot text."""
    return json.dumps(store.export_snapshot(), separators=(",", ":"))


def loads_snapshot(text: str, clock: Callable[[], int] | None = None) -> GraphStore:
    """Parse canonical snapshot text back into a graph."""
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"snapshot is not valid JSON: {exc}") from None
    return GraphStore.import_snapshot(document, clock=clock)
