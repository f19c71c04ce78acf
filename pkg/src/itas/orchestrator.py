"""Tag-driven session state machine.

The student steers the session with four explicit tags.  Ready is the only
signal that moves the session forward; Hint and Media request help in place;
Confusion grafts a remedial detour onto the plan and steps into it.  Chat is
a parallel channel that never moves the position.  Keeping pacing out of the
agents' hands means a misread chat message can cost at most a bad answer,
never a skipped step.

Every externally visible consequence is journaled twice: as a graph event
(the durable record) and as an ordered action journal (the feed the UI
polls).  Replaying the event log alone is enough to put a fresh process
back at the same phase and position; see :func:`reconstruct_session_state`.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Union

from .agents import (
    AgentReply,
    CANNED_RETRY_TEXT,
    ContextSnapshot,
    LEAK_THRESHOLD,
    RemoteAgentError,
    SeekVideo,
    ShowSegment,
    TeachInput,
    TeachingAgent,
    containment,
    guard_solution_leak,
    parse_tool_call,
    tool_call_to_dict,
)
from .analytics import reconstruct_watch_intervals
from .events import EventType, RawEvent, decode_log_line
from .graph import EdgeKind, GraphStore, Node, NodeKind
from .ingest import EventIngestor, SessionRecord
from .lesson import (
    DepthExceeded,
    InvalidSubLesson,
    LessonPlan,
    LessonSpec,
    MAX_DETOUR_DEPTH,
    complete_run,
    create_plan,
    describe_plan,
    insert_sublesson,
)

__all__ = [
    "Tag",
    "Phase",
    "OrchestratorError",
    "SessionCompleted",
    "EmptyMessage",
    "SessionState",
    "AdvanceStep",
    "EnterDetour",
    "ExitDetour",
    "CompleteLesson",
    "SendReply",
    "EmitEvent",
    "GuardrailCheck",
    "OrchestratorAction",
    "JournalEntry",
    "action_to_dict",
    "action_from_dict",
    "SessionOrchestrator",
    "create_session",
    "reconstruct_session_state",
]


class Tag(str, Enum):
    READY = "Ready"
    HINT = "Hint"
    MEDIA = "Media"
    CONFUSION = "Confusion"


class Phase(str, Enum):
    IN_LESSON = "InLesson"
    IN_DETOUR = "InDetour"
    COMPLETED = "Completed"


class OrchestratorError(Exception):
    """Base class for session-control failures."""


class SessionCompleted(OrchestratorError):
    """Tags and chat are rejected once the run is complete."""


class EmptyMessage(OrchestratorError):
    """Chat requires a non-empty message."""


@dataclass
class SessionState:
    """Mutable per-session view.

    ``position`` and ``phase`` are the authoritative pacing state; the graph
    carries the durable trail (StepCompleted events, CURRENT_STEP markers)
    from which both can be rebuilt.
    """

    record: SessionRecord
    position: int
    phase: Phase = Phase.IN_LESSON
    detour_stack: list[int] = field(default_factory=list)
    hint_levels: dict[int, int] = field(default_factory=dict)
    completed_steps: set[int] = field(default_factory=set)
    chat_history: list[tuple[str, str, int]] = field(default_factory=list)
    code_buffer: str = ""
    video_position: float = 0.0
    summary_id: int | None = None
    observed_events: list[RawEvent] = field(default_factory=list)


# -- actions ------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class AdvanceStep:
    to: int


@dataclass(frozen=True, slots=True)
class EnterDetour:
    origin: int
    sub_step_ids: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class ExitDetour:
    origin: int


@dataclass(frozen=True, slots=True)
class CompleteLesson:
    summary_id: int


@dataclass(frozen=True, slots=True)
class SendReply:
    reply: AgentReply


@dataclass(frozen=True, slots=True)
class EmitEvent:
    event_type: str
    node_id: int
    target: int | None = None


@dataclass(frozen=True, slots=True)
class GuardrailCheck:
    containment: float
    redacted: bool
    channel: str  # "chat" for ChatAssistant replies, "summary" at completion


OrchestratorAction = Union[
    AdvanceStep,
    EnterDetour,
    ExitDetour,
    CompleteLesson,
    SendReply,
    EmitEvent,
    GuardrailCheck,
]


def action_to_dict(action: OrchestratorAction) -> dict:
    if isinstance(action, AdvanceStep):
        return {"kind": "AdvanceStep", "to": action.to}
    if isinstance(action, EnterDetour):
        return {
            "kind": "EnterDetour",
            "origin": action.origin,
            "sub_step_ids": list(action.sub_step_ids),
        }
    if isinstance(action, ExitDetour):
        return {"kind": "ExitDetour", "origin": action.origin}
    if isinstance(action, CompleteLesson):
        return {"kind": "CompleteLesson", "summary_id": action.summary_id}
    if isinstance(action, SendReply):
        return {
            "kind": "SendReply",
            "text": action.reply.text,
            "tool_calls": [tool_call_to_dict(c) for c in action.reply.tool_calls],
            "hint_level": action.reply.hint_level,
        }
    if isinstance(action, EmitEvent):
        return {
            "kind": "EmitEvent",
            "event_type": action.event_type,
            "node_id": action.node_id,
            "target": action.target,
        }
    if isinstance(action, GuardrailCheck):
        return {
            "kind": "GuardrailCheck",
            "containment": action.containment,
            "redacted": action.redacted,
            "channel": action.channel,
        }
    raise TypeError(f"not an action: {action!r}")


def action_from_dict(data: dict) -> OrchestratorAction:
    """Inverse of :func:`action_to_dict`; used to reload persisted journals."""
    kind = data.get("kind")
    if kind == "AdvanceStep":
        return AdvanceStep(to=data["to"])
    if kind == "EnterDetour":
        return EnterDetour(
            origin=data["origin"], sub_step_ids=tuple(data["sub_step_ids"])
        )
    if kind == "ExitDetour":
        return ExitDetour(origin=data["origin"])
    if kind == "CompleteLesson":
        return CompleteLesson(summary_id=data["summary_id"])
    if kind == "SendReply":
        return SendReply(
            reply=AgentReply(
                text=data["text"],
                tool_calls=tuple(
                    parse_tool_call(c) for c in data.get("tool_calls", [])
                ),
                hint_level=data.get("hint_level"),
            )
        )
    if kind == "EmitEvent":
        return EmitEvent(
            event_type=data["event_type"],
            node_id=data["node_id"],
            target=data.get("target"),
        )
    if kind == "GuardrailCheck":
        return GuardrailCheck(
            containment=data["containment"],
            redacted=data["redacted"],
            channel=data["channel"],
        )
    raise ValueError(f"not an action document: {data!r}")


@dataclass(frozen=True, slots=True)
class JournalEntry:
    seq: int
    at_ms: int
    action: OrchestratorAction

    def to_dict(self) -> dict:
        return {"seq": self.seq, "at_ms": self.at_ms, **action_to_dict(self.action)}

    @classmethod
    def from_dict(cls, data: dict) -> "JournalEntry":
        return cls(
            seq=data["seq"], at_ms=data["at_ms"], action=action_from_dict(data)
        )


def _now_ms() -> int:
    return int(time.time() * 1000)


class SessionOrchestrator:
    """One student's live session: plan, agent, state, and journals.

    All mutating entry points (:meth:`handle_tag`, :meth:`handle_chat`,
    :meth:`record_event`) serialize on one lock, so per-session handling is
    strictly ordered while separate sessions run freely in parallel.
    """

    def __init__(
        self,
        store: GraphStore,
        ingestor: EventIngestor,
        plan: LessonPlan,
        agent: TeachingAgent,
        record: SessionRecord,
        clock: Callable[[], int] | None = None,
        recent_chat_limit: int = 10,
        state: SessionState | None = None,
        journal: list[JournalEntry] | None = None,
    ) -> None:
        """``state`` and ``journal`` resume a reconstructed session; fresh
        sessions leave both unset and start at the plan's first step."""
        self.store = store
        self.ingestor = ingestor
        self.plan = plan
        self.agent = agent
        self.clock = clock or _now_ms
        self.recent_chat_limit = recent_chat_limit
        self.state = state or SessionState(
            record=record, position=plan.first_step_id
        )
        self._lock = threading.RLock()
        self._journal: list[JournalEntry] = list(journal or [])
        self._mark_current(self.state.position)

    # -- journals ----------------------------------------------------------

    def _journal_actions(
        self, actions: Iterable[OrchestratorAction], at_ms: int
    ) -> None:
        for action in actions:
            self._journal.append(JournalEntry(len(self._journal) + 1, at_ms, action))

    def poll_updates(self, since_seq: int = 0) -> list[JournalEntry]:
        """Everything journaled after ``since_seq``, oldest first."""
        with self._lock:
            if since_seq >= len(self._journal):
                return []
            return self._journal[since_seq:]

    # -- event plumbing ------------------------------------------------------

    def record_event(self, event: RawEvent) -> Node:
        """Ingest a client-reported event and fold it into the state view."""
        if event.session_id != self.state.record.session_id:
            raise OrchestratorError(
                f"event for session {event.session_id!r} sent to "
                f"{self.state.record.session_id!r}"
            )
        with self._lock:
            node = self.ingestor.ingest(event)
            self._observe(event)
            return node

    def _observe(self, event: RawEvent) -> None:
        self.state.observed_events.append(event)
        etype = event.event_type
        if etype == EventType.VIDEO_SEEKED:
            self.state.video_position = event.to_time
        elif event.video_time is not None:
            self.state.video_position = event.video_time
        if etype == EventType.CODE_SUCCESS and event.payload:
            self.state.code_buffer = event.payload

    def _emit(
        self,
        event_type: EventType,
        actor: int,
        at_ms: int,
        target: int | None = None,
        video_time: float | None = None,
        payload: str | None = None,
    ) -> tuple[Node, EmitEvent]:
        event = RawEvent(
            session_id=self.state.record.session_id,
            event_type=event_type,
            actor=actor,
            wall_time=at_ms,
            target=target,
            video_time=video_time,
            payload=payload,
        )
        node = self.ingestor.ingest(event)
        self._observe(event)
        return node, EmitEvent(event_type.value, node.id, target)

    def _mark_current(self, step_id: int) -> None:
        user = self.state.record.user_id
        if not self.store.has_edge(EdgeKind.CURRENT_STEP, user, step_id):
            self.store.add_edge(EdgeKind.CURRENT_STEP, user, step_id)

    def _move(self, step_id: int) -> None:
        self.state.position = step_id
        self.state.phase = (
            Phase.IN_DETOUR if self.state.detour_stack else Phase.IN_LESSON
        )
        self._mark_current(step_id)

    # -- context -------------------------------------------------------------

    def context_snapshot(self) -> ContextSnapshot:
        with self._lock:
            state = self.state
            spec = self.plan.step_spec(state.position)
            video = self.plan.spec.video
            watched = (
                reconstruct_watch_intervals(
                    state.observed_events, video.duration_s
                ).intervals
                if video is not None
                else ()
            )
            origin = state.detour_stack[-1] if state.detour_stack else None
            return ContextSnapshot(
                lesson_title=self.plan.spec.title,
                step_id=state.position,
                step_index=self.plan.main_index_of(state.position),
                instruction=spec.instruction,
                video_segment=spec.video_segment,
                exercise=spec.exercise,
                recent_chat=tuple(
                    (role, text)
                    for role, text, _ in state.chat_history[-self.recent_chat_limit:]
                ),
                code_buffer=state.code_buffer,
                watched_segments=tuple(
                    (i.start_s, i.end_s) for i in watched
                ),
                in_detour=state.phase is Phase.IN_DETOUR,
                origin_instruction=(
                    self.plan.step_spec(origin).instruction
                    if origin is not None
                    else None
                ),
                segment_index=tuple(video.segments) if video is not None else (),
                video_duration_s=video.duration_s if video is not None else None,
            )

    # -- agent plumbing --------------------------------------------------------

    def _teach(self, request: TeachInput) -> AgentReply:
        try:
            return self.agent.teach(self.context_snapshot(), request)
        except RemoteAgentError:
            return AgentReply(text=CANNED_RETRY_TEXT, hint_level=request.hint_level)

    def _reply_actions(
        self, reply: AgentReply, at_ms: int, journal_tool_calls: bool = True
    ) -> tuple[AgentReply, list[OrchestratorAction]]:
        """Guard a reply, log it as ChatAssistant, journal its tool calls."""
        state = self.state
        guard = guard_solution_leak(reply, self.plan.solution_for(state.position))
        final = guard.reply
        actions: list[OrchestratorAction] = [
            GuardrailCheck(guard.containment, guard.redacted, channel="chat"),
            SendReply(final),
        ]
        _, emitted = self._emit(
            EventType.CHAT_ASSISTANT,
            actor=state.record.assistant_id,
            at_ms=at_ms,
            target=state.position,
            payload=final.text,
        )
        actions.append(emitted)
        state.chat_history.append(("assistant", final.text, at_ms))
        if journal_tool_calls:
            for call in final.tool_calls:
                _, emitted = self._emit(
                    EventType.CHAT_TOOL_CALL,
                    actor=state.record.assistant_id,
                    at_ms=at_ms,
                    target=state.position,
                    payload=json.dumps(
                        tool_call_to_dict(call), separators=(",", ":")
                    ),
                )
                actions.append(emitted)
        return final, actions

    # -- tags -------------------------------------------------------------------

    def handle_tag(
        self, tag: Tag, text: str = "", at_ms: int | None = None
    ) -> list[OrchestratorAction]:
        """Apply one student tag.  ``text`` rides along for Media/Confusion.

        Raises:
            SessionCompleted: for every tag once the run is over.
        """
        tag = Tag(tag)
        with self._lock:
            if self.state.phase is Phase.COMPLETED:
                raise SessionCompleted("the lesson run is complete")
            at = self.clock() if at_ms is None else at_ms
            if tag is Tag.READY:
                actions = self._handle_ready(at)
            elif tag is Tag.HINT:
                actions = self._handle_hint(at)
            elif tag is Tag.MEDIA:
                actions = self._handle_media(at, text)
            else:
                actions = self._handle_confusion(at, text)
            self._journal_actions(actions, at)
            return actions

    def _handle_ready(self, at_ms: int) -> list[OrchestratorAction]:
        state = self.state
        position = state.position
        _, emitted = self._emit(
            EventType.STEP_COMPLETED,
            actor=state.record.user_id,
            at_ms=at_ms,
            target=position,
        )
        actions: list[OrchestratorAction] = [emitted]
        state.completed_steps.add(position)
        detour = self.plan.detour_containing(position)
        if detour is not None and position == detour.last_sub_id:
            origin = state.detour_stack.pop()
            if origin != detour.origin_id:
                raise OrchestratorError(
                    f"detour stack top {origin} does not match origin "
                    f"{detour.origin_id}"
                )
            self._move(origin)
            actions.append(ExitDetour(origin))
            return actions
        next_id = self.plan.next_in_chain(position)
        if next_id is not None:
            self._move(next_id)
            actions.append(AdvanceStep(next_id))
            return actions
        actions.extend(self._complete(at_ms))
        return actions

    def _complete(self, at_ms: int) -> list[OrchestratorAction]:
        state = self.state
        try:
            reply = self.agent.teach(
                self.context_snapshot(), TeachInput(kind="summary")
            )
        except RemoteAgentError:
            reply = AgentReply(
                text=f"Run of '{self.plan.spec.title}' completed."
            )
        guard = guard_solution_leak(
            reply, self.plan.solution_for(state.position)
        )
        actions: list[OrchestratorAction] = [
            GuardrailCheck(guard.containment, guard.redacted, channel="summary")
        ]
        summary_id = complete_run(
            self.plan,
            state.record.session_id,
            guard.reply.text,
            state.completed_steps,
        )
        state.summary_id = summary_id
        state.phase = Phase.COMPLETED
        actions.append(CompleteLesson(summary_id))
        _, emitted = self._emit(
            EventType.LESSON_END,
            actor=state.record.user_id,
            at_ms=at_ms,
            target=state.record.lesson_id,
        )
        actions.append(emitted)
        return actions

    def _handle_hint(self, at_ms: int) -> list[OrchestratorAction]:
        state = self.state
        level = min(state.hint_levels.get(state.position, 0) + 1, 3)
        state.hint_levels[state.position] = level
        reply = self._teach(TeachInput(kind="hint", hint_level=level))
        _, actions = self._reply_actions(reply, at_ms)
        return actions

    def _handle_media(self, at_ms: int, query: str) -> list[OrchestratorAction]:
        state = self.state
        reply = self._teach(TeachInput(kind="media", text=query))
        actions: list[OrchestratorAction] = []
        directive = next(
            (c for c in reply.tool_calls if isinstance(c, (ShowSegment, SeekVideo))),
            None,
        )
        if directive is not None:
            start = (
                directive.start_s
                if isinstance(directive, ShowSegment)
                else directive.timestamp_s
            )
            _, emitted = self._emit(
                EventType.SEGMENT_REQUEST,
                actor=state.record.user_id,
                at_ms=at_ms,
                target=state.record.lesson_id,
                video_time=start,
                payload=query.strip() or None,
            )
            actions.append(emitted)
        # The segment directive is carried by the SegmentRequest event; only
        # the reply text goes through the chat channel, so no ChatToolCall.
        _, reply_actions = self._reply_actions(
            reply, at_ms, journal_tool_calls=False
        )
        actions.extend(reply_actions)
        return actions

    def _handle_confusion(self, at_ms: int, reason: str) -> list[OrchestratorAction]:
        state = self.state
        position = state.position
        if self.plan.depth_of(position) >= MAX_DETOUR_DEPTH:
            return self._handle_hint(at_ms)
        try:
            sub_specs = self.agent.generate_sublesson(
                self.context_snapshot(), reason
            )
        except RemoteAgentError:
            return self._handle_hint(at_ms)
        solution = self.plan.solution_for(position)
        if solution and any(
            containment(spec.instruction, solution) >= LEAK_THRESHOLD
            for spec in sub_specs
        ):
            return self._handle_hint(at_ms)
        try:
            detour = insert_sublesson(self.plan, position, sub_specs)
        except (DepthExceeded, InvalidSubLesson):
            return self._handle_hint(at_ms)
        state.detour_stack.append(position)
        self._move(detour.sub_step_ids[0])
        actions: list[OrchestratorAction] = [
            EnterDetour(detour.origin_id, tuple(detour.sub_step_ids))
        ]
        intro = AgentReply(
            text=(
                f"No rush. I've added a short detour of "
                f"{len(detour.sub_step_ids)} steps; we'll return to the step "
                f"you were on once they're done."
            )
        )
        _, reply_actions = self._reply_actions(intro, at_ms)
        actions.extend(reply_actions)
        return actions

    # -- chat ---------------------------------------------------------------------

    def handle_chat(
        self, text: str, at_ms: int | None = None
    ) -> tuple[AgentReply, list[OrchestratorAction]]:
        """One student chat turn: log it, ask the agent, guard, log the reply.

        A remote-agent failure degrades to a canned retry reply; the
        student's message and the degraded answer are both still journaled.

        Raises:
            EmptyMessage: on blank input.
            SessionCompleted: once the run is over.
        """
        if not text or not text.strip():
            raise EmptyMessage("chat message must be non-empty")
        with self._lock:
            state = self.state
            if state.phase is Phase.COMPLETED:
                raise SessionCompleted("the lesson run is complete")
            at = self.clock() if at_ms is None else at_ms
            _, emitted = self._emit(
                EventType.CHAT_USER,
                actor=state.record.user_id,
                at_ms=at,
                target=state.position,
                payload=text,
            )
            actions: list[OrchestratorAction] = [emitted]
            state.chat_history.append(("user", text, at))
            reply = self._teach(TeachInput(kind="chat", text=text))
            final, reply_actions = self._reply_actions(reply, at)
            actions.extend(reply_actions)
            self._journal_actions(actions, at)
            return final, actions

    # -- views -----------------------------------------------------------------

    def state_view(self) -> dict:
        with self._lock:
            state = self.state
            return {
                "phase": state.phase.value,
                "position": state.position,
                "step_index": self.plan.main_index_of(state.position),
                "in_detour": state.phase is Phase.IN_DETOUR,
                "summary_id": state.summary_id,
            }

    def plan_view(self) -> dict:
        with self._lock:
            view = describe_plan(self.plan, self.state.position)
            view["phase"] = self.state.phase.value
            return view


def create_session(
    store: GraphStore,
    ingestor: EventIngestor,
    agent: TeachingAgent,
    spec: LessonSpec,
    session_id: str,
    user_name: str = "student",
    clock: Callable[[], int] | None = None,
    recent_chat_limit: int = 10,
) -> SessionOrchestrator:
    """Set up one session end to end: entities, plan, record, orchestrator.

    The Assignment node anchors CodeSuccess events; its ref is the lesson's
    first exercise when there is one.
    """
    user = store.add_node(NodeKind.USER, {"name": user_name})
    assistant = store.add_node(NodeKind.AI_ASSISTANT, {"name": "tutor"})
    assignment_ref = spec.exercises[0].ref if spec.exercises else spec.title
    assignment = store.add_node(NodeKind.ASSIGNMENT, {"ref": assignment_ref})
    plan = create_plan(store, spec, spec.informed_by or None)
    record = SessionRecord(
        session_id=session_id,
        user_id=user.id,
        assistant_id=assistant.id,
        lesson_id=plan.lesson_id,
        assignment_id=assignment.id,
    )
    ingestor.register_session(record)
    return SessionOrchestrator(
        store, ingestor, plan, agent, record, clock, recent_chat_limit
    )


def reconstruct_session_state(
    plan: LessonPlan, record: SessionRecord, log_lines: Iterable[str]
) -> SessionState:
    """Rebuild a session's state from its event log alone.

    Completed steps come from StepCompleted targets; the position is the
    first entry of the plan's traversal order not yet completed (detour
    sub-steps precede their origin there, so a half-done detour resumes
    inside it); the detour stack is the chain of detours containing that
    position.  Hint escalation levels are not journaled as events and reset
    on reconstruction.
    """
    from .lesson import traversal_order

    state = SessionState(record=record, position=plan.first_step_id)
    ended = False
    for line in log_lines:
        if not line.strip():
            continue
        _, event = decode_log_line(line)
        if event.session_id != record.session_id:
            continue
        etype = event.event_type
        if etype == EventType.STEP_COMPLETED and event.target is not None:
            state.completed_steps.add(event.target)
        elif etype == EventType.CHAT_USER:
            state.chat_history.append(("user", event.payload, event.wall_time))
        elif etype == EventType.CHAT_ASSISTANT:
            state.chat_history.append(
                ("assistant", event.payload, event.wall_time)
            )
        elif etype == EventType.LESSON_END:
            ended = True
        state.observed_events.append(event)
        if etype == EventType.VIDEO_SEEKED:
            state.video_position = event.to_time
        elif event.video_time is not None:
            state.video_position = event.video_time
        if etype == EventType.CODE_SUCCESS and event.payload:
            state.code_buffer = event.payload
    order = traversal_order(plan)
    pending = [step for step in order if step not in state.completed_steps]
    if ended or not pending:
        state.position = order[-1]
        state.phase = Phase.COMPLETED
        summaries = plan.store.out_edges(plan.lesson_id, EdgeKind.HAS_SUMMARY)
        if summaries:
            state.summary_id = summaries[-1].dst
        return state
    state.position = pending[0]
    stack: list[int] = []
    cursor = state.position
    while True:
        detour = plan.detour_containing(cursor)
        if detour is None:
            break
        stack.append(detour.origin_id)
        cursor = detour.origin_id
    state.detour_stack = list(reversed(stack))
    state.phase = Phase.IN_DETOUR if stack else Phase.IN_LESSON
    return state
