"""Graph store tests: typed construction, adjacency, census, persistence.

Adjacency and census answers are checked against brute-force oracles that
work from a flat record of performed operations, never from the store's own
indexes.
"""

from __future__ import annotations

import random

import pytest

from itas.events import EventType
from itas.graph import (
    DuplicateEdge,
    EdgeKind,
    GraphStore,
    InvalidProps,
    IntegrityError,
    NodeKind,
    SchemaMismatch,
    UnknownNode,
    dumps_snapshot,
    loads_snapshot,
)

ENTITY_KINDS = [
    NodeKind.USER,
    NodeKind.AI_ASSISTANT,
    NodeKind.ASSIGNMENT,
    NodeKind.LESSON,
    NodeKind.LESSON_STEP,
    NodeKind.SUMMARY,
]


def fixed_clock(value: int = 1_700_000_000_000):
    return lambda: value


def build_random_graph(rng: random.Random, n_nodes: int = 30, n_edges: int = 60):
    """A random graph plus flat op records for the oracles.

    Returns (store, node_rows, edge_rows) where node_rows is a list of
    (id, kind) and edge_rows a list of (edge_id, kind, src, dst).
    """
    t = 1_000
    store = GraphStore(clock=lambda: t)
    node_rows: list[tuple[int, NodeKind]] = []
    edge_rows: list[tuple[int, EdgeKind, int, int]] = []
    kinds = ENTITY_KINDS + [NodeKind.event(et) for et in EventType]
    for _ in range(n_nodes):
        kind = rng.choice(kinds)
        props = {}
        if rng.random() < 0.5:
            props["note"] = rng.choice(["a", "b", "c"])
        if rng.random() < 0.3:
            props["weight"] = rng.random()
        node = store.add_node(kind, props)
        node_rows.append((node.id, kind))
    ids = [nid for nid, _ in node_rows]
    structural_seen = set()
    made = 0
    while made < n_edges:
        kind = rng.choice(list(EdgeKind))
        src, dst = rng.choice(ids), rng.choice(ids)
        key = (kind, src, dst)
        if kind not in (EdgeKind.PERFORMED, EdgeKind.TARGETS) and key in structural_seen:
            continue
        edge = store.add_edge(kind, src, dst)
        if kind not in (EdgeKind.PERFORMED, EdgeKind.TARGETS):
            structural_seen.add(key)
        edge_rows.append((edge.id, kind, src, dst))
        made += 1
    return store, node_rows, edge_rows


def oracle_neighbors(edge_rows, node_id, kind, direction):
    """Reference answer: filter the flat edge record, order by edge id."""
    picked = []
    for eid, k, src, dst in edge_rows:
        if kind is not None and k is not kind:
            continue
        if direction in ("out", "both") and src == node_id:
            picked.append((eid, dst))
        if direction in ("in", "both") and dst == node_id:
            picked.append((eid, src))
    picked.sort(key=lambda pair: pair[0])
    return [n for _, n in picked]


def test_neighbors_agree_with_brute_force_oracle():
    rng = random.Random(42)
    for round_no in range(20):
        store, node_rows, edge_rows = build_random_graph(rng)
        for nid, _ in node_rows:
            for kind in [None, EdgeKind.NEXT_STEP, EdgeKind.PERFORMED, EdgeKind.TARGETS]:
                for direction in ("out", "in", "both"):
                    got = [n.id for n in store.neighbors(nid, kind, direction)]
                    assert got == oracle_neighbors(edge_rows, nid, kind, direction), (
                        f"round {round_no}, node {nid}, kind {kind}, {direction}"
                    )


def test_census_agrees_with_tally_oracle():
    rng = random.Random(99)
    for _ in range(20):
        store, node_rows, _ = build_random_graph(rng, n_nodes=50, n_edges=20)
        tally: dict[NodeKind, int] = {}
        for _, kind in node_rows:
            tally[kind] = tally.get(kind, 0) + 1
        assert store.count_by_kind() == tally


def test_node_and_edge_ids_are_monotonic_and_dense():
    store, node_rows, edge_rows = build_random_graph(random.Random(3))
    assert [nid for nid, _ in node_rows] == list(range(1, len(node_rows) + 1))
    assert [eid for eid, *_ in edge_rows] == list(range(1, len(edge_rows) + 1))


def test_created_at_comes_from_injected_clock():
    store = GraphStore(clock=fixed_clock(123_456))
    node = store.add_node(NodeKind.USER)
    assert node.created_at == 123_456
    other = store.add_node(NodeKind.LESSON)
    edge = store.add_edge(EdgeKind.CURRENT_STEP, node.id, other.id)
    assert edge.created_at == 123_456


def test_created_at_override_for_event_materialization():
    store = GraphStore(clock=fixed_clock(1))
    node = store.add_node(NodeKind.event(EventType.VIDEO_PLAY), created_at=987)
    assert node.created_at == 987


def test_structural_edges_are_unique_per_endpoints():
    store = GraphStore(clock=fixed_clock())
    a = store.add_node(NodeKind.LESSON)
    b = store.add_node(NodeKind.LESSON_STEP)
    store.add_edge(EdgeKind.HAS_STEP, a.id, b.id)
    with pytest.raises(DuplicateEdge):
        store.add_edge(EdgeKind.HAS_STEP, a.id, b.id)
    # Same endpoints, different structural kind: fine.
    store.add_edge(EdgeKind.CURRENT_STEP, a.id, b.id)


def test_event_attached_edges_may_repeat():
    store = GraphStore(clock=fixed_clock())
    user = store.add_node(NodeKind.USER)
    ev = store.add_node(NodeKind.event(EventType.CHAT_USER))
    store.add_edge(EdgeKind.PERFORMED, user.id, ev.id)
    store.add_edge(EdgeKind.PERFORMED, user.id, ev.id)
    assert len(store.out_edges(user.id, EdgeKind.PERFORMED)) == 2


def test_dangling_endpoints_rejected():
    store = GraphStore(clock=fixed_clock())
    node = store.add_node(NodeKind.USER)
    with pytest.raises(UnknownNode):
        store.add_edge(EdgeKind.PERFORMED, node.id, 999)
    with pytest.raises(UnknownNode):
        store.add_edge(EdgeKind.PERFORMED, 999, node.id)
    with pytest.raises(UnknownNode):
        store.node(999)


def test_props_must_be_scalars():
    store = GraphStore(clock=fixed_clock())
    with pytest.raises(InvalidProps):
        store.add_node(NodeKind.USER, {"nested": {"no": 1}})
    with pytest.raises(InvalidProps):
        store.add_node(NodeKind.USER, {"list": [1]})
    with pytest.raises(InvalidProps):
        store.add_node(NodeKind.USER, {"": "empty key"})
    with pytest.raises(InvalidProps):
        store.add_node(NodeKind.USER, {"none": None})
    node = store.add_node(
        NodeKind.USER, {"s": "x", "i": 3, "f": 1.5, "b": True}
    )
    assert node.props == {"s": "x", "i": 3, "f": 1.5, "b": True}


def test_node_kind_labels_round_trip():
    for kind in ENTITY_KINDS + [NodeKind.event(et) for et in EventType]:
        assert NodeKind.parse(kind.label) == kind
    with pytest.raises(ValueError):
        NodeKind.parse("Gremlin")
    with pytest.raises(ValueError):
        NodeKind("Event")  # events need their type
    with pytest.raises(ValueError):
        NodeKind("User", EventType.VIDEO_PLAY)


def test_store_has_no_deletion_surface():
    for name in dir(GraphStore):
        assert "remove" not in name.lower()
        assert "delete" not in name.lower()


# -- snapshots ------------------------------------------------------------


def test_snapshot_round_trip_is_byte_identical_across_many_random_graphs():
    rng = random.Random(2024)
    for i in range(500):
        store, _, _ = build_random_graph(
            rng, n_nodes=rng.randrange(1, 25), n_edges=rng.randrange(0, 40)
        )
        text = dumps_snapshot(store)
        again = dumps_snapshot(loads_snapshot(text))
        assert text == again, f"graph {i} drifted through import/export"


def test_snapshot_preserves_ids_and_counters():
    store, node_rows, edge_rows = build_random_graph(random.Random(5))
    clone = loads_snapshot(dumps_snapshot(store))
    assert clone.next_ids() == store.next_ids()
    for nid, kind in node_rows:
        assert clone.node(nid).kind == kind


def test_snapshot_schema_version_checked():
    store = GraphStore(clock=fixed_clock())
    store.add_node(NodeKind.USER)
    doc = store.export_snapshot()
    doc["schema_version"] = 99
    with pytest.raises(SchemaMismatch):
        GraphStore.import_snapshot(doc)


def test_snapshot_referential_integrity_checked():
    store = GraphStore(clock=fixed_clock())
    a = store.add_node(NodeKind.USER)
    b = store.add_node(NodeKind.LESSON)
    store.add_edge(EdgeKind.CURRENT_STEP, a.id, b.id)
    doc = store.export_snapshot()
    doc["edges"][0]["to"] = 777
    with pytest.raises(IntegrityError):
        GraphStore.import_snapshot(doc)
    doc = store.export_snapshot()
    doc["nodes"].append(dict(doc["nodes"][0]))
    with pytest.raises(IntegrityError):
        GraphStore.import_snapshot(doc)
