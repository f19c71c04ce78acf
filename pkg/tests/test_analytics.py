"""Analytics tests: interval reconstruction, curves, runs, and the census.

Each derived quantity is checked against a brute-force oracle that takes a
different route: an explicit-mode state machine for intervals, a 1-second
sweep for curves, a while-loop run scanner for peaks and gaps, and a plain
Counter tally for the census.
"""

from __future__ import annotations

import random
from collections import Counter

import pytest

from itas.analytics import (
    BinRun,
    EngagementCurve,
    HEARTBEAT_CADENCE_S,
    WatchInterval,
    aggregate_curves,
    census,
    engagement_curve,
    intervals_from_log,
    peaks_and_gaps,
    reconstruct_watch_intervals,
)
from itas.events import EventType, RawEvent
from itas.graph import GraphStore, NodeKind

from helpers import fresh_ingestor, make_event, session_entities

DURATION = 600.0


def ev(event_type: EventType, **kwargs) -> RawEvent:
    return RawEvent(
        session_id="s-1", event_type=event_type, actor=1, wall_time=0, **kwargs
    )


def play(t):
    return ev(EventType.VIDEO_PLAY, video_time=float(t))


def pause(t):
    return ev(EventType.VIDEO_PAUSE, video_time=float(t))


def seek(a, b):
    return ev(EventType.VIDEO_SEEKED, from_time=float(a), to_time=float(b))


def heartbeat(t):
    return ev(EventType.VIDEO_HEARTBEAT, video_time=float(t))


def lesson_end():
    return ev(EventType.LESSON_END)


# -- interval oracle ----------------------------------------------------------


def oracle_intervals(events, duration, cadence):
    """Explicit-mode replay of the documented closing rules."""
    mode = "paused"
    out = []
    start = None
    hb = None
    skipped = 0

    def emit(end):
        end = min(end, duration)
        if end > start:
            out.append((start, end))

    for event in events:
        name = event.event_type.value
        if name == "VideoPlay":
            if mode == "playing":
                skipped += 1
            else:
                mode, start, hb = "playing", event.video_time, None
        elif name == "VideoPause":
            if mode == "paused":
                skipped += 1
            else:
                emit(event.video_time)
                mode = "paused"
        elif name == "VideoSeeked":
            if mode == "playing":
                emit(event.from_time)
                start, hb = event.to_time, None
        elif name == "VideoHeartbeat":
            if mode == "playing":
                hb = event.video_time
        elif name == "LessonEnd":
            if mode == "playing":
                if hb is not None:
                    emit(hb + cadence)
                mode = "paused"
    if mode == "playing" and hb is not None:
        emit(hb + cadence)
    return out, skipped


def test_play_pause_single_interval():
    rec = reconstruct_watch_intervals([play(0), pause(60)], DURATION)
    assert rec.intervals == (WatchInterval(0.0, 60.0),)
    assert rec.skipped == ()


def test_seek_splits_interval():
    rec = reconstruct_watch_intervals([play(0), seek(10, 50), pause(70)], DURATION)
    assert rec.intervals == (WatchInterval(0.0, 10.0), WatchInterval(50.0, 70.0))


def test_lesson_end_closes_at_last_heartbeat_plus_cadence():
    rec = reconstruct_watch_intervals(
        [play(0), heartbeat(15), heartbeat(30), lesson_end()], DURATION
    )
    assert rec.intervals == (WatchInterval(0.0, 30.0 + HEARTBEAT_CADENCE_S),)


def test_lesson_end_bound_capped_at_duration():
    rec = reconstruct_watch_intervals(
        [play(570), heartbeat(595), lesson_end()], DURATION
    )
    assert rec.intervals == (WatchInterval(570.0, 600.0),)


def test_open_interval_without_heartbeat_is_dropped():
    rec = reconstruct_watch_intervals([play(100), lesson_end()], DURATION)
    assert rec.intervals == ()
    rec = reconstruct_watch_intervals([play(100)], DURATION)
    assert rec.intervals == ()


def test_paused_scrubbing_adds_nothing():
    rec = reconstruct_watch_intervals(
        [seek(0, 60), seek(60, 0), play(0), pause(30)], DURATION
    )
    assert rec.intervals == (WatchInterval(0.0, 30.0),)


def test_inconsistent_transport_is_skipped_and_reported():
    rec = reconstruct_watch_intervals(
        [pause(10), play(0), play(5), pause(20), pause(25)], DURATION
    )
    assert rec.intervals == (WatchInterval(0.0, 20.0),)
    assert [s.reason for s in rec.skipped] == [
        "not playing",
        "already playing",
        "not playing",
    ]
    assert [s.index for s in rec.skipped] == [0, 2, 4]


def test_volume_and_segment_events_do_not_affect_intervals():
    noise = [
        ev(EventType.VIDEO_VOLUME_CHANGE, video_time=5.0),
        ev(EventType.SEGMENT_REQUEST, video_time=5.0),
        ev(EventType.SEGMENT_END, video_time=8.0),
        ev(EventType.SEGMENT_RESET, video_time=8.0),
        ev(EventType.CHAT_USER, payload="hi"),
    ]
    rec = reconstruct_watch_intervals([play(0), *noise, pause(60)], DURATION)
    assert rec.intervals == (WatchInterval(0.0, 60.0),)
    assert rec.skipped == ()


def test_reconstruction_matches_state_machine_oracle():
    rng = random.Random(4242)
    for _ in range(200):
        events = []
        for _ in range(rng.randrange(0, 40)):
            roll = rng.random()
            t = float(rng.randrange(0, int(DURATION) + 1))
            if roll < 0.27:
                events.append(play(t))
            elif roll < 0.54:
                events.append(pause(t))
            elif roll < 0.7:
                events.append(seek(t, float(rng.randrange(0, int(DURATION)))))
            elif roll < 0.9:
                events.append(heartbeat(t))
            elif roll < 0.95:
                events.append(lesson_end())
            else:
                events.append(ev(EventType.VIDEO_VOLUME_CHANGE, video_time=t))
        cadence = rng.choice([5.0, 15.0, 30.0])
        rec = reconstruct_watch_intervals(events, DURATION, cadence)
        want, want_skipped = oracle_intervals(events, DURATION, cadence)
        assert [(i.start_s, i.end_s) for i in rec.intervals] == want
        assert len(rec.skipped) == want_skipped


def test_intervals_from_log_matches_direct_reconstruction():
    _, ingestor, record = fresh_ingestor()
    sid, actor = record.session_id, record.user_id
    events = [
        make_event("LessonStart", sid, actor, 1),
        make_event("VideoPlay", sid, actor, 2, video_time=0.0),
        make_event("VideoHeartbeat", sid, actor, 3, video_time=15.0),
        make_event("VideoPause", sid, actor, 4, video_time=30.0),
        make_event("LessonEnd", sid, actor, 5),
    ]
    for event in events:
        ingestor.ingest(event)
    from_log = intervals_from_log(ingestor.log_lines(), DURATION, session_id=sid)
    direct = reconstruct_watch_intervals(events, DURATION)
    assert from_log == direct
    assert from_log.intervals == (WatchInterval(0.0, 30.0),)


# -- curve oracle -------------------------------------------------------------


def sweep_oracle(intervals, bin_width, duration):
    """Per-second occupancy sweep, then midpoint sampling."""
    seconds = [0] * int(duration)
    for start, end in intervals:
        for s in range(int(start), min(int(end), int(duration))):
            seconds[s] += 1
    n_bins = -(-int(duration) // int(bin_width))
    out = []
    for i in range(n_bins):
        mid = (i + 0.5) * bin_width
        out.append(seconds[int(mid)] if mid < duration else 0)
    return out


def test_single_interval_curve():
    curve = engagement_curve([WatchInterval(0, 60)], 15, 120)
    assert curve.intensities == (1, 1, 1, 1, 0, 0, 0, 0)


def test_overlap_counts_per_midpoint():
    curve = engagement_curve(
        [WatchInterval(50, 70), WatchInterval(55, 65)], 10, 120
    )
    assert curve.intensities[5] == 2  # midpoint 55
    assert curve.intensities[6] == 1  # midpoint 65
    assert sum(curve.intensities) == 3


def test_curve_matches_sweep_oracle_on_1000_sets():
    rng = random.Random(1414)
    for _ in range(1000):
        duration = float(rng.choice([120, 300, 600, 5400]))
        bin_width = float(rng.choice([5, 15, 30, 60]))
        intervals = []
        for _ in range(rng.randrange(0, 12)):
            a = rng.randrange(0, int(duration))
            b = rng.randrange(a + 1, int(duration) + 1)
            intervals.append(WatchInterval(float(a), float(b)))
        curve = engagement_curve(intervals, bin_width, duration)
        want = sweep_oracle(
            [(i.start_s, i.end_s) for i in intervals], bin_width, duration
        )
        assert list(curve.intensities) == want


def test_curve_mass_tracks_total_interval_length():
    rng = random.Random(99)
    for _ in range(100):
        duration, width = 600.0, 15.0
        intervals = []
        for _ in range(rng.randrange(1, 8)):
            a = rng.randrange(0, 585)
            b = rng.randrange(a + 1, 601)
            intervals.append(WatchInterval(float(a), float(b)))
        curve = engagement_curve(intervals, width, duration)
        mass = sum(curve.intensities) * width
        true_mass = sum(i.length_s for i in intervals)
        assert abs(mass - true_mass) <= (len(intervals) + 1) * width


def test_tail_bin_midpoint_past_duration_reads_zero():
    curve = engagement_curve([WatchInterval(0, 100)], 15, 100)
    # 7 bins; the last starts at 90 with midpoint 97.5 inside the video.
    assert len(curve.intensities) == 7
    curve = engagement_curve([WatchInterval(0, 95)], 30, 95)
    # Midpoint of the bin at 90 is 105, past the end: always 0.
    assert curve.intensities[-1] == 0


def test_curve_csv_format():
    curve = engagement_curve([WatchInterval(0, 30)], 15, 60)
    assert curve.to_csv() == "bin_start_s,intensity\n0,1\n15,1\n30,0\n45,0"


def test_curve_rejects_bad_frames():
    with pytest.raises(ValueError):
        engagement_curve([], 0, 60)
    with pytest.raises(ValueError):
        engagement_curve([], 15, 0)


def test_aggregate_curves_sums_per_bin():
    a = engagement_curve([WatchInterval(0, 30)], 15, 60)
    b = engagement_curve([WatchInterval(15, 45)], 15, 60)
    total = aggregate_curves([a, b])
    assert total.intensities == (1, 2, 1, 0)
    with pytest.raises(ValueError):
        aggregate_curves([a, engagement_curve([], 15, 120)])
    with pytest.raises(ValueError):
        aggregate_curves([])


# -- peaks and gaps -----------------------------------------------------------


def scan_runs_oracle(intensities, predicate):
    runs = []
    i = 0
    while i < len(intensities):
        if predicate(intensities[i]):
            j = i
            while j + 1 < len(intensities) and predicate(intensities[j + 1]):
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def test_flat_curve_has_no_peaks_or_gaps():
    curve = EngagementCurve(15.0, 60.0, (1, 1, 1, 1))
    result = peaks_and_gaps(curve)
    assert result["peaks"] == [] and result["gaps"] == []


def test_known_runs():
    curve = EngagementCurve(15.0, 120.0, (2, 2, 1, 0, 0, 1, 3, 0))
    result = peaks_and_gaps(curve)
    assert result["peaks"] == [
        BinRun(0, 1, 0.0, 30.0),
        BinRun(6, 6, 90.0, 105.0),
    ]
    assert result["gaps"] == [
        BinRun(3, 4, 45.0, 75.0),
        BinRun(7, 7, 105.0, 120.0),
    ]
    assert result["peaks"][0].covers_time(20.0)
    assert not result["peaks"][0].covers_time(30.0)


def test_runs_match_scan_oracle():
    rng = random.Random(321)
    for _ in range(300):
        intensities = tuple(rng.randrange(0, 4) for _ in range(rng.randrange(0, 50)))
        duration = len(intensities) * 15.0 or 15.0
        curve = EngagementCurve(15.0, duration, intensities)
        result = peaks_and_gaps(curve)
        for key, predicate in (("peaks", lambda x: x > 1), ("gaps", lambda x: x == 0)):
            got = [(r.first_bin, r.last_bin) for r in result[key]]
            assert got == scan_runs_oracle(intensities, predicate)
        peak_bins = {
            i for r in result["peaks"] for i in range(r.first_bin, r.last_bin + 1)
        }
        gap_bins = {
            i for r in result["gaps"] for i in range(r.first_bin, r.last_bin + 1)
        }
        assert not peak_bins & gap_bins


# -- census -------------------------------------------------------------------


def test_empty_graph_census_is_all_zeros():
    report = census(GraphStore(clock=lambda: 0))
    assert report.grand_total == 0
    assert set(report.entities) == {
        "User",
        "AIAssistant",
        "Assignment",
        "Lesson",
        "LessonStep",
        "Summary",
    }
    assert set(report.events) == {e.value for e in EventType}
    assert all(v == 0 for v in report.events.values())


def test_census_matches_counter_tally():
    rng = random.Random(777)
    for _ in range(25):
        store, ingestor, record = fresh_ingestor()
        sid, actor = record.session_id, record.user_id
        tally = Counter(
            {"User": 1, "AIAssistant": 1, "Lesson": 1, "Assignment": 1}
        )
        wall = 1_700_000_000_000
        ingestor.ingest(make_event("LessonStart", sid, actor, wall))
        tally["LessonStart"] += 1
        for _ in range(rng.randrange(0, 60)):
            name = rng.choice(
                ["VideoHeartbeat", "ChatUser", "VideoPlay", "CodeSuccess"]
            )
            wall += 1
            ingestor.ingest(make_event(name, sid, actor, wall))
            tally[name] += 1
        report = census(store)
        for name, count in tally.items():
            bucket = report.entities if name in report.entities else report.events
            assert bucket[name] == count
        assert report.grand_total == sum(tally.values())
        assert report.grand_total == sum(store.count_by_kind().values())


def test_census_table_mirrors_fixed_row_layout():
    store = GraphStore(clock=lambda: 0)
    session_entities(store, "s-1")
    for _ in range(15):
        store.add_node(NodeKind.LESSON_STEP, {"instruction": "x"})
    store.add_node(NodeKind.SUMMARY, {"text": "done"})
    text = census(store).to_text()
    lines = text.splitlines()
    assert lines[0].startswith("Category / Type")
    assert lines[0].rstrip().endswith("Count")
    assert any(line.strip() == "Core Entities" for line in lines)
    joined = {line.strip().rsplit(None, 1)[0].strip(): line for line in lines[1:]}
    assert "User / AI Assistant" in text
    for label, value in [
        ("User / AI Assistant", "1 / 1"),
        ("Assignment / Lesson", "1 / 1"),
        ("Lesson Steps", "15"),
        ("Summary", "1"),
        ("Video Play / Pause", "0 / 0"),
        ("Total Core Entities", "20"),
        ("Total Events", "0"),
        ("Grand Total Nodes", "20"),
    ]:
        matching = [line for line in lines if line.strip().startswith(label)]
        assert matching, f"missing row {label}"
        assert matching[0].strip().endswith(value), matching[0]
    assert joined  # row labels are unique
    report = census(store)
    assert report.to_dict()["totals"]["grand_total"] == 20
