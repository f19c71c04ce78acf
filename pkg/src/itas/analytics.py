"""Read-side analytics: watch intervals, engagement curves, and the census.

Everything here is a pure function over event streams or graph snapshots;
nothing mutates the store, so these can run concurrently with ingestion.

The engagement intensity of a time bin is the number of reconstructed watch
intervals that cover the bin's midpoint.  Intensity above 1 marks re-watched
material, 0 marks skipped material.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .events import EventType, RawEvent, decode_log_line
from .graph import GraphStore, NodeKind

__all__ = [
    "HEARTBEAT_CADENCE_S",
    "WatchInterval",
    "SkippedEvent",
    "WatchReconstruction",
    "reconstruct_watch_intervals",
    "intervals_from_log",
    "EngagementCurve",
    "engagement_curve",
    "aggregate_curves",
    "BinRun",
    "peaks_and_gaps",
    "CensusReport",
    "census",
]

HEARTBEAT_CADENCE_S = 15.0


# -- watch intervals ----------------------------------------------------------


@dataclass(frozen=True, slots=True)
class WatchInterval:
    """One continuously watched stretch of the video, in video seconds."""

    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if not 0 <= self.start_s < self.end_s:
            raise ValueError(f"bad interval [{self.start_s}, {self.end_s}]")

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True, slots=True)
class SkippedEvent:
    """An event the reconstruction had to ignore, and why."""

    index: int
    event_type: str
    reason: str


@dataclass(frozen=True, slots=True)
class WatchReconstruction:
    intervals: tuple[WatchInterval, ...]
    skipped: tuple[SkippedEvent, ...]


def reconstruct_watch_intervals(
    events: Iterable[RawEvent],
    duration_s: float,
    heartbeat_cadence_s: float = HEARTBEAT_CADENCE_S,
) -> WatchReconstruction:
    """Rebuild watched stretches from a session's transport events, in order.

    An interval opens at VideoPlay, or at a VideoSeeked landing point while
    playing.  It closes at VideoPause, at a VideoSeeked departure point, or
    at LessonEnd; the LessonEnd bound is the last heartbeat inside the open
    interval plus one cadence, capped at the video duration, and the open
    interval is dropped entirely if it saw no heartbeat.  The same rule
    applies if the stream simply ends while playing.

    Transport events that contradict the current state (a second VideoPlay,
    a VideoPause with nothing open) are skipped and reported rather than
    raised: analytics must cope with whatever a client actually sent.
    """
    intervals: list[WatchInterval] = []
    skipped: list[SkippedEvent] = []
    open_start: float | None = None
    last_heartbeat: float | None = None

    def close(end_s: float) -> None:
        nonlocal open_start, last_heartbeat
        assert open_start is not None
        end_s = min(end_s, duration_s)
        if end_s > open_start:
            intervals.append(WatchInterval(open_start, end_s))
        open_start = None
        last_heartbeat = None

    def close_by_heartbeat() -> None:
        nonlocal open_start, last_heartbeat
        if last_heartbeat is None:
            open_start = None
            return
        close(last_heartbeat + heartbeat_cadence_s)

    for index, event in enumerate(events):
        etype = event.event_type
        if etype == EventType.VIDEO_PLAY:
            if open_start is not None:
                skipped.append(SkippedEvent(index, etype.value, "already playing"))
                continue
            open_start = event.video_time
            last_heartbeat = None
        elif etype == EventType.VIDEO_PAUSE:
            if open_start is None:
                skipped.append(SkippedEvent(index, etype.value, "not playing"))
                continue
            close(event.video_time)
        elif etype == EventType.VIDEO_SEEKED:
            if open_start is not None:
                close(event.from_time)
                open_start = event.to_time
        elif etype == EventType.VIDEO_HEARTBEAT:
            if open_start is not None:
                last_heartbeat = event.video_time
        elif etype == EventType.LESSON_END:
            if open_start is not None:
                close_by_heartbeat()
    if open_start is not None:
        close_by_heartbeat()
    return WatchReconstruction(tuple(intervals), tuple(skipped))


def intervals_from_log(
    lines: Iterable[str],
    duration_s: float,
    session_id: str | None = None,
    heartbeat_cadence_s: float = HEARTBEAT_CADENCE_S,
) -> WatchReconstruction:
    """Reconstruct straight from event-log lines, optionally one session."""
    events = []
    for line in lines:
        if not line.strip():
            continue
        _, event = decode_log_line(line)
        if session_id is None or event.session_id == session_id:
            events.append(event)
    return reconstruct_watch_intervals(events, duration_s, heartbeat_cadence_s)


# -- engagement curve ---------------------------------------------------------


@dataclass(frozen=True, slots=True)
class EngagementCurve:
    bin_width_s: float
    duration_s: float
    intensities: tuple[int, ...]

    @property
    def bins(self) -> list[tuple[float, int]]:
        return [
            (i * self.bin_width_s, intensity)
            for i, intensity in enumerate(self.intensities)
        ]

    def to_csv(self) -> str:
        rows = ["bin_start_s,intensity"]
        rows.extend(f"{start:g},{intensity}" for start, intensity in self.bins)
        return "\n".join(rows)

    def to_dict(self) -> dict:
        return {
            "bin_width_s": self.bin_width_s,
            "duration_s": self.duration_s,
            "bins": [
                {"bin_start_s": start, "intensity": intensity}
                for start, intensity in self.bins
            ],
        }


def engagement_curve(
    intervals: Sequence[WatchInterval],
    bin_width_s: float,
    duration_s: float,
) -> EngagementCurve:
    """Count, per bin, the intervals covering the bin midpoint.

    Bins tile [0, duration); a midpoint is covered when it falls inside
    [start_s, end_s).  A final partial bin whose midpoint lies at or past
    the duration can never be covered and reads 0.
    """
    if bin_width_s <= 0:
        raise ValueError("bin_width_s must be positive")
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    n_bins = int(np.ceil(duration_s / bin_width_s))
    midpoints = (np.arange(n_bins) + 0.5) * bin_width_s
    intensities = np.zeros(n_bins, dtype=np.int64)
    for interval in intervals:
        intensities += (midpoints >= interval.start_s) & (midpoints < interval.end_s)
    return EngagementCurve(bin_width_s, duration_s, tuple(int(x) for x in intensities))


def aggregate_curves(curves: Sequence[EngagementCurve]) -> EngagementCurve:
    """Per-bin sum across sessions; all curves must share the same frame."""
    if not curves:
        raise ValueError("nothing to aggregate")
    first = curves[0]
    for curve in curves[1:]:
        if (
            curve.bin_width_s != first.bin_width_s
            or curve.duration_s != first.duration_s
        ):
            raise ValueError("curves disagree on bin width or duration")
    total = np.sum([curve.intensities for curve in curves], axis=0)
    return EngagementCurve(
        first.bin_width_s, first.duration_s, tuple(int(x) for x in total)
    )


@dataclass(frozen=True, slots=True)
class BinRun:
    """A maximal run of consecutive bins, in both index and time coordinates."""

    first_bin: int
    last_bin: int
    start_s: float
    end_s: float

    def covers_time(self, t: float) -> bool:
        return self.start_s <= t < self.end_s


def peaks_and_gaps(curve: EngagementCurve) -> dict[str, list[BinRun]]:
    """Maximal runs of re-watched bins (intensity > 1) and dead bins (= 0)."""

    def runs(matching) -> list[BinRun]:
        found: list[BinRun] = []
        run_start: int | None = None
        for i, intensity in enumerate(curve.intensities):
            if matching(intensity):
                if run_start is None:
                    run_start = i
            elif run_start is not None:
                found.append(_bin_run(curve, run_start, i - 1))
                run_start = None
        if run_start is not None:
            found.append(_bin_run(curve, run_start, len(curve.intensities) - 1))
        return found

    return {
        "peaks": runs(lambda x: x > 1),
        "gaps": runs(lambda x: x == 0),
    }


def _bin_run(curve: EngagementCurve, first: int, last: int) -> BinRun:
    return BinRun(
        first_bin=first,
        last_bin=last,
        start_s=first * curve.bin_width_s,
        end_s=min((last + 1) * curve.bin_width_s, curve.duration_s),
    )


# -- census -------------------------------------------------------------------

_ENTITY_ROW_ORDER = (
    "User",
    "AIAssistant",
    "Assignment",
    "Lesson",
    "LessonStep",
    "Summary",
)

_EVENT_ROW_ORDER = (
    EventType.VIDEO_HEARTBEAT,
    EventType.CHAT_ASSISTANT,
    EventType.VIDEO_SEEKED,
    EventType.STEP_COMPLETED,
    EventType.CHAT_USER,
    EventType.VIDEO_PLAY,
    EventType.VIDEO_PAUSE,
    EventType.SEGMENT_REQUEST,
    EventType.SEGMENT_END,
    EventType.VIDEO_VOLUME_CHANGE,
    EventType.SEGMENT_RESET,
    EventType.LESSON_START,
    EventType.LESSON_END,
    EventType.CODE_SUCCESS,
    EventType.CHAT_TOOL_CALL,
    EventType.METADATA_LOAD,
)


@dataclass(frozen=True, slots=True)
class CensusReport:
    """Per-kind node counts with entity, event, and grand totals."""

    entities: dict[str, int]
    events: dict[str, int]

    @property
    def core_entity_total(self) -> int:
        return sum(self.entities.values())

    @property
    def event_total(self) -> int:
        return sum(self.events.values())

    @property
    def grand_total(self) -> int:
        return self.core_entity_total + self.event_total

    def to_dict(self) -> dict:
        return {
            "entities": dict(self.entities),
            "events": dict(self.events),
            "totals": {
                "core_entities": self.core_entity_total,
                "events": self.event_total,
                "grand_total": self.grand_total,
            },
        }

    def to_text(self) -> str:
        ent = self.entities
        evt = self.events
        rows: list[tuple[str, str]] = [
            ("Core Entities", ""),
            ("User / AI Assistant", f"{ent['User']} / {ent['AIAssistant']}"),
            ("Assignment / Lesson", f"{ent['Assignment']} / {ent['Lesson']}"),
            ("Lesson Steps", str(ent["LessonStep"])),
            ("Summary", str(ent["Summary"])),
            ("Events", ""),
            ("Video Heartbeat", str(evt["VideoHeartbeat"])),
            ("Chat Assistant", str(evt["ChatAssistant"])),
            ("Video Seeked", str(evt["VideoSeeked"])),
            ("Step Completed", str(evt["StepCompleted"])),
            ("Chat User", str(evt["ChatUser"])),
            ("Video Play / Pause", f"{evt['VideoPlay']} / {evt['VideoPause']}"),
            ("Segment Req / End", f"{evt['SegmentRequest']} / {evt['SegmentEnd']}"),
            ("Video Vol Change", str(evt["VideoVolumeChange"])),
            ("Segment Reset", str(evt["SegmentReset"])),
            ("Lesson Start / End", f"{evt['LessonStart']} / {evt['LessonEnd']}"),
            ("Code Success", str(evt["CodeSuccess"])),
            ("Chat Tool Call", str(evt["ChatToolCall"])),
            ("Metadata Load", str(evt["MetadataLoad"])),
            ("Totals", ""),
            ("Total Core Entities", str(self.core_entity_total)),
            ("Total Events", str(self.event_total)),
            ("Grand Total Nodes", str(self.grand_total)),
        ]
        label_width = max(len(label) for label, _ in rows) + 2
        lines = [f"{'Category / Type':<{label_width + 2}}Count"]
        for label, value in rows:
            if value == "":
                lines.append(label)
            else:
                lines.append(f"  {label:<{label_width}}{value}")
        return "\n".join(lines)


def census(store: GraphStore) -> CensusReport:
    """Tally the graph into the fixed entity and event rows.

    Every row is always present, zero when absent from the graph, so two
    reports are comparable field by field.
    """
    by_kind = store.count_by_kind()
    entities = {name: 0 for name in _ENTITY_ROW_ORDER}
    events = {etype.value: 0 for etype in _EVENT_ROW_ORDER}
    for kind, count in by_kind.items():
        if kind.is_event:
            events[kind.event_type.value] += count
        else:
            entities[kind.category] += count
    return CensusReport(entities, events)
