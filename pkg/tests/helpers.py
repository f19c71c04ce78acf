"""Shared builders for the test suite.

The event rule table here is intentionally a second, independent statement
of the per-type field requirements (the first lives in the implementation);
tests that need a valid event of some type build it from this table.
"""

from __future__ import annotations

import random

from itas.events import EventType, RawEvent
from itas.graph import GraphStore, NodeKind
from itas.ingest import EventIngestor, SessionRecord

# type name -> (needs video_time, needs seek coords, needs payload)
EVENT_RULES = {
    "VideoHeartbeat": (True, False, False),
    "ChatAssistant": (False, False, True),
    "VideoSeeked": (True, True, False),
    "StepCompleted": (False, False, False),
    "ChatUser": (False, False, True),
    "VideoPlay": (True, False, False),
    "VideoPause": (True, False, False),
    "SegmentRequest": (True, False, False),
    "SegmentEnd": (True, False, False),
    "VideoVolumeChange": (True, False, False),
    "SegmentReset": (True, False, False),
    "LessonStart": (False, False, False),
    "LessonEnd": (False, False, False),
    "CodeSuccess": (False, False, False),
    "ChatToolCall": (False, False, False),
    "MetadataLoad": (False, False, True),
}

MIDDLE_TYPES = [
    name for name in EVENT_RULES if name not in ("LessonStart", "LessonEnd")
]


def make_event(
    type_name: str,
    session_id: str,
    actor: int,
    wall_time: int,
    target: int | None = None,
    video_time: float | None = None,
    payload: str | None = None,
    from_time: float | None = None,
    to_time: float | None = None,
) -> RawEvent:
    needs_time, needs_seek, needs_payload = EVENT_RULES[type_name]
    if needs_time and video_time is None:
        video_time = 10.0
    if needs_seek:
        if from_time is None:
            from_time = 30.0
        if to_time is None:
            to_time = video_time if video_time is not None else 0.0
    if needs_payload and payload is None:
        payload = "lorem"
    return RawEvent(
        session_id=session_id,
        event_type=EventType(type_name),
        actor=actor,
        wall_time=wall_time,
        target=target,
        video_time=video_time,
        from_time=from_time,
        to_time=to_time,
        payload=payload,
    )


def session_entities(
    store: GraphStore, session_id: str = "s1"
) -> SessionRecord:
    """Create the four per-session entity nodes and return their record."""
    user = store.add_node(NodeKind.USER, {"name": "sam"})
    assistant = store.add_node(NodeKind.AI_ASSISTANT, {"name": "tutor"})
    lesson = store.add_node(NodeKind.LESSON, {"title": "demo"})
    assignment = store.add_node(NodeKind.ASSIGNMENT, {"ref": "exercise-1"})
    return SessionRecord(
        session_id=session_id,
        user_id=user.id,
        assistant_id=assistant.id,
        lesson_id=lesson.id,
        assignment_id=assignment.id,
    )


def fresh_ingestor(clock_ms: int = 1_700_000_000_000):
    store = GraphStore(clock=lambda: clock_ms)
    ingestor = EventIngestor(store)
    record = session_entities(store)
    ingestor.register_session(record)
    return store, ingestor, record


def random_stream(
    rng: random.Random,
    record: SessionRecord,
    length: int = 40,
    end_lesson: bool = True,
    start_wall: int = 1_700_000_000_000,
) -> list[RawEvent]:
    """A bracketed, wall-ordered stream of valid events for one session."""
    wall = start_wall
    events = [
        make_event("LessonStart", record.session_id, record.user_id, wall)
    ]
    for _ in range(length):
        wall += rng.randrange(0, 5_000)
        name = rng.choice(MIDDLE_TYPES)
        actor = (
            record.assistant_id
            if name in ("ChatAssistant", "ChatToolCall")
            else record.user_id
        )
        target = rng.choice(
            [None, record.lesson_id, record.assignment_id]
        )
        events.append(
            make_event(
                name,
                record.session_id,
                actor,
                wall,
                target=target,
                video_time=float(rng.randrange(0, 5400))
                if EVENT_RULES[name][0]
                else None,
            )
        )
    if end_lesson:
        wall += rng.randrange(0, 5_000)
        events.append(
            make_event("LessonEnd", record.session_id, record.user_id, wall)
        )
    return events
