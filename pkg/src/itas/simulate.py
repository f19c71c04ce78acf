"""Deterministic session simulator.

A session script is a timed list of actions (raw events, student tags, chat
messages) plus the lesson fixture and agent reply script to run them
against.  ``run_script`` executes the full pipeline on a fresh graph under a
fixed-epoch clock, so the same script always produces byte-identical logs
and snapshots.

``canonical_script`` is the bundled reference run: one student works through
the quantum fundamentals lesson, re-watching the opening and the
entanglement passage, skipping the 30-75 minute stretch, asking one chat
question per step, and pulling eleven hints and three clip replays along
the way.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .agents import AgentError, ScriptedTeachingAgent, load_script
from .analytics import CensusReport, census
from .events import EventType, RawEvent, ValidationError
from .graph import GraphStore
from .ingest import EventIngestor, IngestError
from .lesson import LessonError, load_lesson_spec
from .orchestrator import (
    OrchestratorError,
    SessionOrchestrator,
    Tag,
    create_session,
)

__all__ = [
    "SIM_EPOCH_MS",
    "ScriptAction",
    "SessionScript",
    "ScriptParseError",
    "ScriptRunError",
    "SimResult",
    "parse_session_script",
    "load_session_script",
    "script_to_dict",
    "run_script",
    "run_parallel",
    "canonical_script",
]

#: All simulated wall clocks start here; script times are offsets from it.
SIM_EPOCH_MS = 1_750_000_000_000

_FIXTURES = Path(__file__).parent / "fixtures"

_ACTION_KINDS = ("event", "tag", "chat")


class ScriptParseError(Exception):
    """A script document is structurally unusable."""


class ScriptRunError(Exception):
    """An action failed mid-run; carries the index of the failing action."""

    def __init__(self, action_index: int, message: str) -> None:
        super().__init__(message)
        self.action_index = action_index


@dataclass(frozen=True, slots=True)
class ScriptAction:
    at_ms: int
    kind: str
    payload: dict


@dataclass(slots=True)
class SessionScript:
    name: str
    lesson_fixture: str
    agent_script: str
    steps: list[ScriptAction] = field(default_factory=list)


@dataclass(slots=True)
class SimResult:
    graph: GraphStore
    report: CensusReport
    session_id: str
    log_lines: list[str]
    orchestrator: SessionOrchestrator


def parse_session_script(raw: dict) -> SessionScript:
    if not isinstance(raw, dict):
        raise ScriptParseError("script document must be an object")
    name = raw.get("name")
    if not isinstance(name, str) or not name.strip():
        raise ScriptParseError("script needs a non-empty name")
    for key in ("lesson_fixture", "agent_script"):
        if not isinstance(raw.get(key), str) or not raw[key]:
            raise ScriptParseError(f"script needs a {key} path")
    steps_raw = raw.get("steps")
    if not isinstance(steps_raw, list):
        raise ScriptParseError("script steps must be a list")
    actions: list[ScriptAction] = []
    last_at = 0
    for i, entry in enumerate(steps_raw):
        if not isinstance(entry, dict):
            raise ScriptParseError(f"step {i} must be an object")
        at_ms = entry.get("at_ms")
        if not isinstance(at_ms, int) or at_ms < 0:
            raise ScriptParseError(f"step {i}: at_ms must be a non-negative int")
        if at_ms < last_at:
            raise ScriptParseError(f"step {i}: at_ms went backwards")
        last_at = at_ms
        kind = entry.get("kind")
        if kind not in _ACTION_KINDS:
            raise ScriptParseError(f"step {i}: kind must be one of {_ACTION_KINDS}")
        payload = entry.get("payload")
        if not isinstance(payload, dict):
            raise ScriptParseError(f"step {i}: payload must be an object")
        required = {"event": "type", "tag": "tag", "chat": "text"}[kind]
        if required not in payload:
            raise ScriptParseError(f"step {i}: {kind} payload needs {required!r}")
        actions.append(ScriptAction(at_ms=at_ms, kind=kind, payload=dict(payload)))
    return SessionScript(
        name=name,
        lesson_fixture=raw["lesson_fixture"],
        agent_script=raw["agent_script"],
        steps=actions,
    )


def load_session_script(path: str | Path) -> SessionScript:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScriptParseError(f"cannot read script {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScriptParseError(f"script {path} is not valid JSON: {exc}") from exc
    return parse_session_script(raw)


def script_to_dict(script: SessionScript) -> dict:
    return {
        "name": script.name,
        "lesson_fixture": script.lesson_fixture,
        "agent_script": script.agent_script,
        "steps": [
            {"at_ms": a.at_ms, "kind": a.kind, "payload": dict(a.payload)}
            for a in script.steps
        ],
    }


def _resolve_ref(ref, orch: SessionOrchestrator) -> int | None:
    """Map a symbolic entity reference to its node id."""
    if ref is None:
        return None
    record = orch.state.record
    fixed = {
        "user": record.user_id,
        "assistant": record.assistant_id,
        "lesson": record.lesson_id,
        "assignment": record.assignment_id,
    }
    if ref in fixed:
        return fixed[ref]
    if isinstance(ref, str) and ref.startswith("step:"):
        index = int(ref.split(":", 1)[1])
        return orch.plan.main_step_ids[index - 1]
    raise ScriptParseError(f"unknown entity reference {ref!r}")


def _build_event(
    payload: dict, wall_ms: int, orch: SessionOrchestrator
) -> RawEvent:
    def number(key):
        value = payload.get(key)
        return float(value) if value is not None else None

    return RawEvent(
        session_id=orch.state.record.session_id,
        event_type=EventType(payload["type"]),
        actor=_resolve_ref(payload.get("actor", "user"), orch),
        wall_time=wall_ms,
        target=_resolve_ref(payload.get("target"), orch),
        video_time=number("video_time"),
        from_time=number("from_time"),
        to_time=number("to_time"),
        payload=payload.get("payload"),
    )


def run_script(script: SessionScript, session_id: str | None = None) -> SimResult:
    """Execute one script on a fresh graph and return graph plus census.

    Raises:
        ScriptRunError: the first action the pipeline rejects, by index.
    """
    spec = load_lesson_spec(script.lesson_fixture)
    agent = ScriptedTeachingAgent(load_script(script.agent_script))
    store = GraphStore(clock=lambda: SIM_EPOCH_MS)
    ingestor = EventIngestor(store)
    sid = session_id or f"sim-{script.name}"
    orch = create_session(store, ingestor, agent, spec, sid)
    for index, action in enumerate(script.steps):
        wall = SIM_EPOCH_MS + action.at_ms
        try:
            if action.kind == "event":
                orch.record_event(_build_event(action.payload, wall, orch))
            elif action.kind == "tag":
                orch.handle_tag(
                    Tag(action.payload["tag"]),
                    text=action.payload.get("text", ""),
                    at_ms=wall,
                )
            else:
                orch.handle_chat(action.payload["text"], at_ms=wall)
        except (
            OrchestratorError,
            IngestError,
            ValidationError,
            LessonError,
            AgentError,
            ScriptParseError,
            KeyError,
            ValueError,
        ) as exc:
            raise ScriptRunError(
                index, f"action {index} ({action.kind}): {exc}"
            ) from exc
    return SimResult(
        graph=store,
        report=census(store),
        session_id=sid,
        log_lines=ingestor.log_lines(),
        orchestrator=orch,
    )


def run_parallel(script: SessionScript, count: int) -> list[SimResult]:
    """Run ``count`` independent sessions of one script concurrently.

    Each session gets its own graph; determinism means every result must
    come out identical to a solo run.
    """
    results: list[SimResult | None] = [None] * count
    failures: list[Exception] = []

    def worker(i: int) -> None:
        try:
            results[i] = run_script(script, session_id=f"sim-{script.name}-{i + 1}")
        except Exception as exc:  # noqa: BLE001 - surfaced to the caller below
            failures.append(exc)

    threads = [
        threading.Thread(target=worker, args=(i,), name=f"sim-{i + 1}")
        for i in range(count)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise failures[0]
    return [r for r in results if r is not None]


# -- the canonical run ---------------------------------------------------------

_CHATS = {
    1: "Before we start: in the query model, what exactly counts as one query?",
    2: "Is an amplitude just a probability written differently, or something more?",
    3: "Why does measuring destroy the superposition instead of just revealing it?",
    4: "Why can't the Bell state be written as two separate qubit states?",
    5: "Do I really need a universal gate set, or can I get by with the lecture's gates?",
    6: "What stops an oracle from just being a giant lookup table?",
    7: "How does Deutsch-Jozsa decide in one query what classically takes so many?",
    8: "My Bernstein-Vazirani circuit keeps returning all zeros; what am I missing?",
    9: "What makes Simon's problem exponentially hard for a classical machine?",
    10: "Is the quantum Fourier transform the same matrix as the classical DFT?",
    11: "How precise does phase estimation get with t ancilla qubits?",
    12: "Why does order finding need phase estimation at all?",
    13: "How does factoring actually reduce to order finding in practice?",
    14: "My modular exponentiation circuit blows up in depth; is that expected?",
    15: "What should I review before attempting Grover's search on my own?",
}


def canonical_script() -> SessionScript:
    """The bundled reference session.

    Viewing pattern: the opening five minutes and the entanglement passage
    each get three passes, minutes 30-75 are skipped entirely, and the rest
    is watched once.  Interactions: one chat per step, fifteen Ready tags,
    eleven hints (steps 3, 5x2, 7, 8x3, 10, 12x2, 14), three clip replays
    (steps 2, 6, 13), one passing exercise run.
    """
    actions: list[ScriptAction] = []
    wall_ms = 0

    def push(kind: str, payload: dict, advance_s: float) -> None:
        nonlocal wall_ms
        actions.append(ScriptAction(at_ms=wall_ms, kind=kind, payload=payload))
        wall_ms += int(advance_s * 1000)

    def event(type_name: str, advance_s: float = 3.0, **fields) -> None:
        payload = {"type": type_name}
        payload.update({k: v for k, v in fields.items() if v is not None})
        push("event", payload, advance_s)

    def play(video_s: float) -> None:
        event("VideoPlay", video_time=float(video_s), advance_s=15.0)

    def heartbeats(first_s: float, last_s: float) -> None:
        v = first_s
        while v <= last_s:
            event("VideoHeartbeat", video_time=float(v), advance_s=15.0)
            v += 15.0

    def seek(from_s: float, to_s: float) -> None:
        event(
            "VideoSeeked",
            video_time=float(from_s),
            from_time=float(from_s),
            to_time=float(to_s),
        )

    def pause(video_s: float) -> None:
        event("VideoPause", video_time=float(video_s))

    def volume(video_s: float, level: str) -> None:
        event("VideoVolumeChange", video_time=float(video_s), payload=level)

    def chat(step: int) -> None:
        push("chat", {"text": _CHATS[step]}, advance_s=30.0)

    def hint() -> None:
        push("tag", {"tag": "Hint"}, advance_s=20.0)

    def ready() -> None:
        push("tag", {"tag": "Ready"}, advance_s=3.0)

    def media(query: str, clip_end_s: float, reset_at_s: float | None = None) -> None:
        # The clip runs in an overlay player; the main timeline stays paused,
        # so only the request (orchestrator side) and the end marker appear.
        push("tag", {"tag": "Media", "text": query}, advance_s=clip_end_s % 360 + 360)
        event("SegmentEnd", video_time=clip_end_s)
        if reset_at_s is not None:
            event("SegmentReset", video_time=reset_at_s)

    event("LessonStart", target="lesson")
    event(
        "MetadataLoad",
        target="lesson",
        payload='{"video_ref":"qaf-lecture-01.mp4","duration_s":5400}',
    )
    volume(0, "0.8")
    seek(0, 1800)  # preview scrub: peek ahead, come back
    seek(1800, 0)

    chat(1)
    ready()

    play(0)  # opening pass, replayed twice more
    heartbeats(15, 300)
    seek(300, 0)
    heartbeats(15, 300)
    seek(300, 0)
    heartbeats(15, 600)
    pause(600)

    chat(2)
    media("measurement", clip_end_s=1080.0, reset_at_s=720.0)
    ready()

    play(600)
    heartbeats(615, 900)
    volume(900, "0.6")
    heartbeats(915, 1200)
    pause(1200)

    chat(3)
    hint()
    ready()

    play(1200)
    heartbeats(1215, 1800)
    pause(1800)

    chat(4)
    ready()

    seek(1800, 2400)  # scrub around, settle on the entanglement passage
    seek(2400, 3300)
    seek(3300, 1500)
    seek(1500, 1230)

    chat(5)
    hint()
    hint()
    ready()

    play(1230)  # entanglement passage, watched twice here
    heartbeats(1245, 1500)
    seek(1500, 1230)
    heartbeats(1245, 1500)
    pause(1500)

    chat(6)
    media("oracle", clip_end_s=2160.0)
    ready()

    chat(7)
    hint()
    ready()

    chat(8)
    hint()
    hint()
    hint()
    event(
        "CodeSuccess",
        target="assignment",
        payload="bv-secret-string: all checks passed",
    )
    ready()

    seek(1500, 2700)  # skip the middle stretch entirely
    seek(2700, 3600)
    seek(3600, 4200)
    seek(4200, 5100)
    seek(5100, 4800)
    seek(4800, 4500)

    chat(9)
    ready()

    chat(10)
    hint()
    ready()

    chat(11)
    ready()

    play(4500)
    heartbeats(4515, 4650)
    volume(4650, "0.9")
    heartbeats(4665, 4800)
    pause(4800)

    chat(12)
    hint()
    hint()
    ready()

    play(4800)
    heartbeats(4815, 5100)
    pause(5100)

    chat(13)
    media("order finding", clip_end_s=4320.0)
    ready()

    play(5100)
    heartbeats(5115, 5400)
    pause(5400)

    chat(14)
    hint()
    ready()

    chat(15)
    ready()

    return SessionScript(
        name="canonical",
        lesson_fixture=str(_FIXTURES / "quantum_fundamentals.json"),
        agent_script=str(_FIXTURES / "teaching_script.json"),
        steps=actions,
    )
