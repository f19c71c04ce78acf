"""Ingestion and replay tests.

Census claims are checked against a tally oracle computed straight from the
submitted stream; the replay path is checked against the live path on many
random streams.
"""

from __future__ import annotations

import random
from collections import Counter

import pytest

from itas.events import EventType, ParseError, ValidationError
from itas.graph import EdgeKind, GraphStore, NodeKind, dumps_snapshot, loads_snapshot
from itas.ingest import (
    DuplicateLessonStart,
    EventIngestor,
    OutOfOrderTimestamp,
    SessionClosed,
    SessionNotStarted,
    UnknownSession,
    event_trace,
    replay_log,
    structural_baseline,
)
from helpers import fresh_ingestor, make_event, random_stream, session_entities


def test_census_matches_stream_tally_oracle():
    rng = random.Random(11)
    for _ in range(25):
        store, ingestor, record = fresh_ingestor()
        stream = random_stream(rng, record, length=rng.randrange(0, 60))
        for ev in stream:
            ingestor.ingest(ev)
        oracle = Counter(ev.event_type for ev in stream)
        census = {
            kind.event_type: n
            for kind, n in store.count_by_kind().items()
            if kind.is_event
        }
        assert census == dict(oracle)


def test_each_event_gets_one_performed_and_at_most_one_targets_edge():
    rng = random.Random(12)
    store, ingestor, record = fresh_ingestor()
    stream = random_stream(rng, record, length=50)
    for ev in stream:
        node = ingestor.ingest(ev)
        performed = store.in_edges(node.id, EdgeKind.PERFORMED)
        targets = store.out_edges(node.id, EdgeKind.TARGETS)
        assert len(performed) == 1 and performed[0].src == ev.actor
        if ev.target is None:
            assert targets == []
        else:
            assert len(targets) == 1 and targets[0].dst == ev.target


def test_one_log_line_per_accepted_event_and_gapless_seq():
    rng = random.Random(13)
    store, ingestor, record = fresh_ingestor()
    stream = random_stream(rng, record, length=30)
    for ev in stream:
        ingestor.ingest(ev)
    lines = ingestor.log_lines()
    assert len(lines) == len(stream)
    import json

    assert [json.loads(line)["seq"] for line in lines] == list(
        range(1, len(stream) + 1)
    )


def test_rejected_event_leaves_graph_and_log_untouched():
    store, ingestor, record = fresh_ingestor()
    ingestor.ingest(make_event("LessonStart", "s1", record.user_id, 1000))
    before = dumps_snapshot(store)
    lines_before = ingestor.log_lines()
    bad = make_event("ChatUser", "s1", record.user_id, 2000)
    bad.payload = None
    with pytest.raises(ValidationError):
        ingestor.ingest(bad)
    with pytest.raises(UnknownSession):
        ingestor.ingest(make_event("ChatUser", "ghost", record.user_id, 2000))
    dangling = make_event("ChatUser", "s1", record.user_id, 2000, target=999)
    with pytest.raises(Exception):
        ingestor.ingest(dangling)
    assert dumps_snapshot(store) == before
    assert ingestor.log_lines() == lines_before


def test_session_bracketing_rules():
    store, ingestor, record = fresh_ingestor()
    with pytest.raises(SessionNotStarted):
        ingestor.ingest(make_event("VideoPlay", "s1", record.user_id, 500))
    ingestor.ingest(make_event("LessonStart", "s1", record.user_id, 1000))
    with pytest.raises(DuplicateLessonStart):
        ingestor.ingest(make_event("LessonStart", "s1", record.user_id, 2000))
    ingestor.ingest(make_event("LessonEnd", "s1", record.user_id, 3000))
    with pytest.raises(SessionClosed):
        ingestor.ingest(make_event("VideoPlay", "s1", record.user_id, 4000))


def test_wall_time_must_not_go_backwards():
    store, ingestor, record = fresh_ingestor()
    ingestor.ingest(make_event("LessonStart", "s1", record.user_id, 5000))
    ingestor.ingest(make_event("VideoPlay", "s1", record.user_id, 5000))
    with pytest.raises(OutOfOrderTimestamp):
        ingestor.ingest(make_event("VideoPause", "s1", record.user_id, 4999))


def test_log_sink_receives_each_line():
    seen: list[str] = []
    store = GraphStore(clock=lambda: 1)
    ingestor = EventIngestor(store, log_sink=seen.append)
    record = session_entities(store)
    ingestor.register_session(record)
    ingestor.ingest(make_event("LessonStart", "s1", record.user_id, 10))
    ingestor.ingest(make_event("VideoPlay", "s1", record.user_id, 20))
    assert seen == ingestor.log_lines()


# -- replay ---------------------------------------------------------------


def test_replay_reproduces_live_graph_exactly_on_many_random_streams():
    rng = random.Random(404)
    for round_no in range(100):
        store, ingestor, record = fresh_ingestor()
        baseline_doc = store.export_snapshot()
        stream = random_stream(
            rng, record, length=rng.randrange(0, 40), end_lesson=rng.random() < 0.5
        )
        for ev in stream:
            ingestor.ingest(ev)
        live_text = dumps_snapshot(store)
        assert structural_baseline(store.export_snapshot()) == baseline_doc

        replayed = replay_log(
            ingestor.log_lines(), GraphStore.import_snapshot(baseline_doc)
        )
        # No structural writes happen mid-stream here, so the replayed graph
        # is identical down to the bytes, not merely isomorphic.
        assert dumps_snapshot(replayed) == live_text, f"round {round_no}"
        assert event_trace(replayed) == event_trace(store)


def test_replay_of_empty_log_returns_baseline():
    store, ingestor, record = fresh_ingestor()
    doc = store.export_snapshot()
    replayed = replay_log([], GraphStore.import_snapshot(doc))
    assert replayed.export_snapshot() == doc


def test_replay_rejects_gaps_and_disorder():
    store, ingestor, record = fresh_ingestor()
    for ev in random_stream(random.Random(1), record, length=5):
        ingestor.ingest(ev)
    lines = ingestor.log_lines()
    base = lambda: loads_snapshot(dumps_snapshot(GraphStore.import_snapshot(structural_baseline(store.export_snapshot()))))
    with pytest.raises(ParseError):
        replay_log([lines[0], lines[2]], base())
    with pytest.raises(ParseError):
        replay_log(["{"], base())
    shuffled = [lines[1], lines[0]]
    with pytest.raises(ParseError):
        replay_log(shuffled, base())


def test_replay_enforces_bracketing():
    store, ingestor, record = fresh_ingestor()
    ingestor.ingest(make_event("LessonStart", "s1", record.user_id, 100))
    ingestor.ingest(make_event("VideoPlay", "s1", record.user_id, 200))
    lines = ingestor.log_lines()
    baseline = structural_baseline(store.export_snapshot())
    # Drop the LessonStart but renumber so the seq check passes; the
    # bracketing check must still fire.
    import json

    record2 = json.loads(lines[1])
    record2["seq"] = 1
    with pytest.raises(SessionNotStarted):
        replay_log([json.dumps(record2, separators=(",", ":"))],
                   GraphStore.import_snapshot(baseline))


def test_structural_baseline_strips_only_events():
    store, ingestor, record = fresh_ingestor()
    for ev in random_stream(random.Random(2), record, length=10):
        ingestor.ingest(ev)
    doc = store.export_snapshot()
    base = structural_baseline(doc)
    assert all(not n["kind"].startswith("Event:") for n in base["nodes"])
    assert len(base["nodes"]) == 4
    event_ids = {n["id"] for n in doc["nodes"] if n["kind"].startswith("Event:")}
    assert all(
        e["from"] not in event_ids and e["to"] not in event_ids
        for e in base["edges"]
    )
