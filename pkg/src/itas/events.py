"""Interaction event taxonomy and wire formats.

Every observable action in a tutoring session, whether it comes from the
student's player, the chat surface, or the orchestrator itself, is captured
as one event drawn from a closed taxonomy of sixteen types.  This module owns
that taxonomy, the raw-event envelope, field-level validation, and the
line-delimited log codec.

The event log is the durable, replayable record of a session.  Each line is
a single JSON object with a fixed field order and no extra whitespace::

    {"seq":1,"session_id":"s1","event_type":"LessonStart","actor":1,
     "target":null,"video_time":null,"payload":null,"wall_time":1700000000000}

``seq`` is gapless from 1 within a log.  ``wall_time`` is integer epoch
milliseconds and must be non-decreasing line over line.  VideoSeeked lines
pack the seek coordinates into ``payload`` as a canonical JSON string so the
eight-field schema stays fixed; the codec unpacks them on decode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum, unique

__all__ = [
    "EventType",
    "RawEvent",
    "ValidationError",
    "ParseError",
    "VIDEO_TIMED_EVENTS",
    "PAYLOAD_REQUIRED_EVENTS",
    "validate_event",
    "encode_log_line",
    "decode_log_line",
]


@unique
class EventType(str, Enum):
    """The sixteen interaction event types.  The taxonomy is closed."""

    VIDEO_HEARTBEAT = "VideoHeartbeat"
    CHAT_ASSISTANT = "ChatAssistant"
    VIDEO_SEEKED = "VideoSeeked"
    STEP_COMPLETED = "StepCompleted"
    CHAT_USER = "ChatUser"
    VIDEO_PLAY = "VideoPlay"
    VIDEO_PAUSE = "VideoPause"
    SEGMENT_REQUEST = "SegmentRequest"
    SEGMENT_END = "SegmentEnd"
    VIDEO_VOLUME_CHANGE = "VideoVolumeChange"
    SEGMENT_RESET = "SegmentReset"
    LESSON_START = "LessonStart"
    LESSON_END = "LessonEnd"
    CODE_SUCCESS = "CodeSuccess"
    CHAT_TOOL_CALL = "ChatToolCall"
    METADATA_LOAD = "MetadataLoad"


#: Types whose events happen at a position on the video timeline and
#: therefore must carry a non-negative ``video_time``.
VIDEO_TIMED_EVENTS: frozenset[EventType] = frozenset(
    {
        EventType.VIDEO_HEARTBEAT,
        EventType.VIDEO_SEEKED,
        EventType.VIDEO_PLAY,
        EventType.VIDEO_PAUSE,
        EventType.SEGMENT_REQUEST,
        EventType.SEGMENT_END,
        EventType.SEGMENT_RESET,
        EventType.VIDEO_VOLUME_CHANGE,
    }
)

#: Types that are meaningless without a payload: chat turns carry their text,
#: metadata loads carry the resource manifest.
PAYLOAD_REQUIRED_EVENTS: frozenset[EventType] = frozenset(
    {
        EventType.CHAT_USER,
        EventType.CHAT_ASSISTANT,
        EventType.METADATA_LOAD,
    }
)

#: Fixed field order of a log line.  Changing this breaks the wire format.
_LOG_FIELDS = (
    "seq",
    "session_id",
    "event_type",
    "actor",
    "target",
    "video_time",
    "payload",
    "wall_time",
)


class ValidationError(ValueError):
    """A raw event violates a field-level rule for its type."""


class ParseError(ValueError):
    """A log line is not a well-formed event record."""


@dataclass(slots=True)
class RawEvent:
    """An interaction event as submitted for ingestion.

    ``actor`` and ``target`` are graph node ids; ``target`` is optional and
    points at the Lesson, LessonStep, or Assignment the event is about.
    ``from_time``/``to_time`` are only meaningful for VideoSeeked and record
    where the scrub started and landed.  ``wall_time`` is epoch milliseconds.
    """

    session_id: str
    event_type: EventType
    actor: int
    wall_time: int
    target: int | None = None
    video_time: float | None = None
    from_time: float | None = None
    to_time: float | None = None
    payload: str | None = None

    def props(self) -> dict[str, str | int | float | bool]:
        """Scalar props for the graph node backing this event."""
        out: dict[str, str | int | float | bool] = {"session_id": self.session_id}
        if self.video_time is not None:
            out["video_time"] = self.video_time
        if self.from_time is not None:
            out["from_time"] = self.from_time
        if self.to_time is not None:
            out["to_time"] = self.to_time
        if self.payload is not None:
            out["payload"] = self.payload
        return out


def validate_event(event: RawEvent) -> None:
    """Check ``event`` against the field rules for its type.

    Raises:
        ValidationError: on the first violated rule.  The message names the
            offending field so callers can surface it.
    """
    if not isinstance(event.event_type, EventType):
        raise ValidationError(f"unknown event type: {event.event_type!r}")
    if not event.session_id or not isinstance(event.session_id, str):
        raise ValidationError("session_id must be a non-empty string")
    if not isinstance(event.actor, int) or isinstance(event.actor, bool) or event.actor < 1:
        raise ValidationError("actor must be a node id (positive integer)")
    if event.target is not None and (
        not isinstance(event.target, int) or isinstance(event.target, bool) or event.target < 1
    ):
        raise ValidationError("target must be a node id (positive integer) or null")
    if not isinstance(event.wall_time, int) or isinstance(event.wall_time, bool) or event.wall_time < 0:
        raise ValidationError("wall_time must be a non-negative integer (epoch ms)")

    et = event.event_type
    if et in VIDEO_TIMED_EVENTS:
        if event.video_time is None:
            raise ValidationError(f"{et.value} requires video_time")
        if not isinstance(event.video_time, (int, float)) or isinstance(event.video_time, bool):
            raise ValidationError("video_time must be a number")
        if event.video_time < 0:
            raise ValidationError("video_time must be >= 0")
    elif event.video_time is not None:
        raise ValidationError(f"{et.value} does not take video_time")

    if et is EventType.VIDEO_SEEKED:
        for name, value in (("from_time", event.from_time), ("to_time", event.to_time)):
            if value is None:
                raise ValidationError(f"VideoSeeked requires {name}")
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ValidationError(f"{name} must be a number")
            if value < 0:
                raise ValidationError(f"{name} must be >= 0")
        if event.payload is not None:
            raise ValidationError("VideoSeeked payload is reserved for seek coordinates")
    else:
        if event.from_time is not None or event.to_time is not None:
            raise ValidationError(f"{et.value} does not take from_time/to_time")

    if et in PAYLOAD_REQUIRED_EVENTS:
        if not event.payload or not isinstance(event.payload, str):
            raise ValidationError(f"{et.value} requires a non-empty payload")
    elif event.payload is not None and not isinstance(event.payload, str):
        raise ValidationError("payload must be a string or null")


def _pack_seek_payload(event: RawEvent) -> str | None:
    if event.event_type is not EventType.VIDEO_SEEKED:
        return event.payload
    return json.dumps(
        {"from_time": event.from_time, "to_time": event.to_time},
        separators=(",", ":"),
    )


def encode_log_line(seq: int, event: RawEvent) -> str:
    """Serialize one validated event as a log line (no trailing newline)."""
    record = {
        "seq": seq,
        "session_id": event.session_id,
        "event_type": event.event_type.value,
        "actor": event.actor,
        "target": event.target,
        "video_time": event.video_time,
        "payload": _pack_seek_payload(event),
        "wall_time": event.wall_time,
    }
    return json.dumps(record, separators=(",", ":"))


def decode_log_line(line: str) -> tuple[int, RawEvent]:
    """Parse one log line back into ``(seq, RawEvent)``.

    Raises:
        ParseError: if the line is not valid JSON, has missing or extra
            fields, or carries an unknown event type.
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from None
    if not isinstance(record, dict):
        raise ParseError("log line must be a JSON object")
    missing = [name for name in _LOG_FIELDS if name not in record]
    if missing:
        raise ParseError(f"missing fields: {', '.join(missing)}")
    extra = [name for name in record if name not in _LOG_FIELDS]
    if extra:
        raise ParseError(f"unexpected fields: {', '.join(extra)}")
    try:
        event_type = EventType(record["event_type"])
    except ValueError:
        raise ParseError(f"unknown event type: {record['event_type']!r}") from None

    seq = record["seq"]
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 1:
        raise ParseError("seq must be a positive integer")

    payload = record["payload"]
    from_time = to_time = None
    if event_type is EventType.VIDEO_SEEKED:
        try:
            coords = json.loads(payload) if payload else {}
            from_time = coords["from_time"]
            to_time = coords["to_time"]
        except (json.JSONDecodeError, TypeError, KeyError):
            raise ParseError("VideoSeeked payload must pack from_time/to_time") from None
        payload = None

    event = RawEvent(
        session_id=record["session_id"],
        event_type=event_type,
        actor=record["actor"],
        wall_time=record["wall_time"],
        target=record["target"],
        video_time=record["video_time"],
        from_time=from_time,
        to_time=to_time,
        payload=payload,
    )
    try:
        validate_event(event)
    except ValidationError as exc:
        raise ParseError(str(exc)) from None
    return seq, event
