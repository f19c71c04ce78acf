"""Teaching and planning agents, their replies, and the solution-leak guard.

Two implementations sit behind one small interface.  The scripted agent is a
pure function of (script table, context snapshot, input) and is what tests
and the simulator run against.  The remote agent adapts the same interface
onto an HTTP chat-completion endpoint; every remote failure degrades to a
canned retry so a flaky upstream can never wedge a session.

Agents only ever see a :class:`ContextSnapshot`.  The snapshot is built by
the orchestrator and carries no solution text, so even a fully compromised
agent reply can only leak what the guard at the exit also checks for.

The guard works on 8-token shingles: a reply whose text reproduces 60% or
more of the solution's shingles is replaced by a guidance-only template.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, Union

from .lesson import LessonSpec, Segment, StepSpec

__all__ = [
    "SeekVideo",
    "HighlightCode",
    "ShowSegment",
    "DisplayHint",
    "ToolCall",
    "AgentReply",
    "TeachInput",
    "ContextSnapshot",
    "GuardResult",
    "TeachingAgent",
    "ScriptedTeachingAgent",
    "RemoteTeachingAgent",
    "RemoteConfig",
    "AgentConfig",
    "AgentError",
    "InvalidToolCall",
    "InvalidAgentReply",
    "InvalidInstructorInput",
    "RemoteAgentError",
    "plan_lesson",
    "SHINGLE_SIZE",
    "LEAK_THRESHOLD",
    "CANNED_RETRY_TEXT",
    "REDACTED_TEXT",
    "tokenize",
    "shingles",
    "containment",
    "guard_solution_leak",
    "tool_call_to_dict",
    "parse_tool_call",
    "load_script",
]

log = logging.getLogger(__name__)

SHINGLE_SIZE = 8
LEAK_THRESHOLD = 0.6

CANNED_RETRY_TEXT = (
    "I could not reach my reasoning service just now. "
    "Nothing was lost; please send that again in a moment."
)

REDACTED_TEXT = (
    "I can guide you, but I won't hand over the finished solution. "
    "Go back to the approach we laid out, implement the next small piece "
    "yourself, and show me what you get; I'll point you onward from there."
)


class AgentError(Exception):
    """Base class for agent-side failures."""


class InvalidToolCall(AgentError):
    """A tool call's arguments are out of range."""


class InvalidAgentReply(AgentError):
    """A reply is structurally unusable (empty text, bad hint level)."""


class InvalidInstructorInput(AgentError):
    """Lesson planning input is missing its topic or resources."""


class RemoteAgentError(AgentError):
    """The remote endpoint failed, timed out, or answered garbage."""


# -- tool calls -------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SeekVideo:
    timestamp_s: float


@dataclass(frozen=True, slots=True)
class HighlightCode:
    line: int


@dataclass(frozen=True, slots=True)
class ShowSegment:
    start_s: float
    end_s: float


@dataclass(frozen=True, slots=True)
class DisplayHint:
    level: int


ToolCall = Union[SeekVideo, HighlightCode, ShowSegment, DisplayHint]


def validate_tool_call(call: ToolCall, video_duration_s: float | None) -> None:
    if isinstance(call, SeekVideo):
        if call.timestamp_s < 0 or (
            video_duration_s is not None and call.timestamp_s > video_duration_s
        ):
            raise InvalidToolCall(f"seek to {call.timestamp_s}s is off the timeline")
    elif isinstance(call, HighlightCode):
        if call.line < 1:
            raise InvalidToolCall("code lines are 1-based")
    elif isinstance(call, ShowSegment):
        if not 0 <= call.start_s < call.end_s:
            raise InvalidToolCall("segment must have start < end, both non-negative")
        if video_duration_s is not None and call.end_s > video_duration_s:
            raise InvalidToolCall("segment runs past the end of the video")
    elif isinstance(call, DisplayHint):
        if not 1 <= call.level <= 3:
            raise InvalidToolCall("hint levels run 1..3")
    else:
        raise InvalidToolCall(f"unknown tool call {call!r}")


def tool_call_to_dict(call: ToolCall) -> dict:
    if isinstance(call, SeekVideo):
        return {"tool": "seek_video", "timestamp_s": call.timestamp_s}
    if isinstance(call, HighlightCode):
        return {"tool": "highlight_code", "line": call.line}
    if isinstance(call, ShowSegment):
        return {"tool": "show_segment", "start_s": call.start_s, "end_s": call.end_s}
    if isinstance(call, DisplayHint):
        return {"tool": "display_hint", "level": call.level}
    raise InvalidToolCall(f"unknown tool call {call!r}")


def parse_tool_call(raw: dict) -> ToolCall:
    try:
        name = raw["tool"]
        if name == "seek_video":
            return SeekVideo(float(raw["timestamp_s"]))
        if name == "highlight_code":
            return HighlightCode(int(raw["line"]))
        if name == "show_segment":
            return ShowSegment(float(raw["start_s"]), float(raw["end_s"]))
        if name == "display_hint":
            return DisplayHint(int(raw["level"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidToolCall(f"malformed tool call {raw!r}: {exc}") from None
    raise InvalidToolCall(f"unknown tool {name!r}")


# -- replies and context -----------------------------------------------------


@dataclass(frozen=True, slots=True)
class AgentReply:
    text: str
    tool_calls: tuple[ToolCall, ...] = ()
    hint_level: int | None = None

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise InvalidAgentReply("reply text must be non-empty")
        if self.hint_level is not None and not 1 <= self.hint_level <= 3:
            raise InvalidAgentReply("hint_level runs 1..3")


@dataclass(frozen=True, slots=True)
class TeachInput:
    """What the student (or the orchestrator on their behalf) asked for."""

    kind: str  # chat | hint | media | summary
    text: str = ""
    hint_level: int | None = None


@dataclass(frozen=True, slots=True)
class ContextSnapshot:
    """Everything an agent may know.  Built by the orchestrator.

    There is no solution field by design: what is not in the snapshot
    cannot be echoed back.
    """

    lesson_title: str
    step_id: int
    step_index: int | None
    instruction: str
    video_segment: tuple[float, float] | None
    exercise: str | None
    recent_chat: tuple[tuple[str, str], ...] = ()
    code_buffer: str = ""
    watched_segments: tuple[tuple[float, float], ...] = ()
    in_detour: bool = False
    origin_instruction: str | None = None
    segment_index: tuple[Segment, ...] = ()
    video_duration_s: float | None = None


class TeachingAgent(Protocol):
    def teach(self, snapshot: ContextSnapshot, request: TeachInput) -> AgentReply: ...

    def generate_sublesson(
        self, snapshot: ContextSnapshot, reason: str
    ) -> list[StepSpec]: ...

    def plan_lesson(
        self, instructor_input: dict, prior_summaries: list[int]
    ) -> LessonSpec: ...


# -- the leak guard ----------------------------------------------------------


_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, drop empties."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


def shingles(tokens: Sequence[str], size: int = SHINGLE_SIZE) -> set[tuple[str, ...]]:
    if len(tokens) < size:
        return set()
    return {tuple(tokens[i : i + size]) for i in range(len(tokens) - size + 1)}


def containment(reply_text: str, solution: str, size: int = SHINGLE_SIZE) -> float:
    """Fraction of the solution's shingles present in the reply's text."""
    sol = shingles(tokenize(solution), size)
    if not sol:
        return 0.0
    rep = shingles(tokenize(reply_text), size)
    return len(sol & rep) / len(sol)


@dataclass(frozen=True, slots=True)
class GuardResult:
    reply: AgentReply
    containment: float
    redacted: bool


def guard_solution_leak(
    reply: AgentReply,
    solution: str | None,
    threshold: float = LEAK_THRESHOLD,
) -> GuardResult:
    """Check a student-facing reply against the step's held-back solution.

    Always returns; an empty or missing solution passes everything through
    with containment 0.  At or above ``threshold`` the reply is replaced
    wholesale (text and tool calls) by the guidance-only template, keeping
    only the hint level.
    """
    if not solution:
        return GuardResult(reply, 0.0, False)
    score = containment(reply.text, solution)
    if score >= threshold:
        replacement = AgentReply(
            text=REDACTED_TEXT, tool_calls=(), hint_level=reply.hint_level
        )
        return GuardResult(replacement, score, True)
    return GuardResult(reply, score, False)


# -- scripted agent ----------------------------------------------------------


def load_script(path: str | Path) -> dict:
    """Load a reply script: a JSON object keyed ``step:<n>/<kind>/<level>``."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise AgentError("script file must be a JSON object")
    return raw


def _clip(text: str, limit: int = 140) -> str:
    text = text.strip()
    if len(text) <= limit:
        return text
    return text[: limit - 1].rsplit(" ", 1)[0] + "…"


class ScriptedTeachingAgent:
    """Deterministic agent driven by a reply table.

    Lookup key is ``step:<n>/<kind>/<level>`` where ``n`` is the main-chain
    step index (0 for detour sub-steps), ``kind`` is the input kind, and
    ``level`` is the hint level (0 outside hints).  Missing keys fall back
    to templates built from the snapshot, so the agent is total.
    """

    def __init__(self, script: dict | None = None) -> None:
        self._script = script or {}

    @staticmethod
    def key(step_index: int | None, kind: str, level: int | None) -> str:
        return f"step:{step_index or 0}/{kind}/{level or 0}"

    def _entry(self, snapshot: ContextSnapshot, kind: str, level: int | None) -> dict | None:
        return self._script.get(self.key(snapshot.step_index, kind, level))

    def teach(self, snapshot: ContextSnapshot, request: TeachInput) -> AgentReply:
        kind = request.kind
        if kind == "chat":
            return self._chat(snapshot, request)
        if kind == "hint":
            return self._hint(snapshot, request)
        if kind == "media":
            return self._media(snapshot, request)
        if kind == "summary":
            return self._summary(snapshot)
        raise InvalidAgentReply(f"unknown teach kind {kind!r}")

    def _reply_from_entry(
        self, entry: dict, snapshot: ContextSnapshot, hint_level: int | None = None
    ) -> AgentReply:
        calls = tuple(parse_tool_call(c) for c in entry.get("tool_calls", []))
        for call in calls:
            validate_tool_call(call, snapshot.video_duration_s)
        return AgentReply(text=entry["text"], tool_calls=calls, hint_level=hint_level)

    def _chat(self, snapshot: ContextSnapshot, request: TeachInput) -> AgentReply:
        entry = self._entry(snapshot, "chat", 0)
        if entry is not None:
            return self._reply_from_entry(entry, snapshot)
        return AgentReply(
            text=(
                f"Good question. Keep it anchored to the step at hand: "
                f"{_clip(snapshot.instruction)} What part of that is unclear?"
            )
        )

    def _hint(self, snapshot: ContextSnapshot, request: TeachInput) -> AgentReply:
        level = request.hint_level or 1
        entry = self._entry(snapshot, "hint", level)
        if entry is not None:
            return self._reply_from_entry(entry, snapshot, hint_level=level)
        if level == 1:
            text = (
                f"Nudge: re-read the task once more, slowly. "
                f"{_clip(snapshot.instruction)}"
            )
        elif level == 2:
            text = (
                "Strategy: split it into the smallest checkable pieces and do "
                "the first one only. Which quantity can you compute right now?"
            )
        else:
            text = (
                "Structure: set up the scaffolding first: inputs, the loop or "
                "recursion over them, and the final readout. Fill in one box "
                "at a time and test after each."
            )
        return AgentReply(text=text, hint_level=level)

    def _media(self, snapshot: ContextSnapshot, request: TeachInput) -> AgentReply:
        query = request.text.strip().casefold()
        match: Segment | None = None
        if query:
            for segment in snapshot.segment_index:
                if query in segment.title.casefold():
                    match = segment
                    break
        if match is not None:
            call: ToolCall = ShowSegment(match.start_s, match.end_s)
            text_default = f"Rolling the clip on {match.title}."
        elif snapshot.video_segment is not None:
            call = ShowSegment(*snapshot.video_segment)
            text_default = "Replaying this step's portion of the lecture."
        else:
            call = SeekVideo(0.0)
            text_default = "Starting the lecture from the top."
        validate_tool_call(call, snapshot.video_duration_s)
        entry = self._entry(snapshot, "media", 0)
        text = entry["text"] if entry else text_default
        return AgentReply(text=text, tool_calls=(call,))

    def _summary(self, snapshot: ContextSnapshot) -> AgentReply:
        entry = self._entry(snapshot, "summary", 0)
        if entry is not None:
            return self._reply_from_entry(entry, snapshot)
        return AgentReply(
            text=(
                f"Run of '{snapshot.lesson_title}' finished at "
                f"step {snapshot.step_index}. The closing work was: "
                f"{_clip(snapshot.instruction)}"
            )
        )

    def generate_sublesson(
        self, snapshot: ContextSnapshot, reason: str
    ) -> list[StepSpec]:
        entry = self._entry(snapshot, "confusion", 0)
        if entry is not None and entry.get("sub_steps"):
            return [
                StepSpec(instruction=s["instruction"]) for s in entry["sub_steps"]
            ]
        topic = _clip(snapshot.instruction, 90)
        return [
            StepSpec(
                instruction=f"Back up one level: restate in your own words what "
                f"this step is asking. ({topic})"
            ),
            StepSpec(
                instruction="Work one tiny concrete example of the idea by hand, "
                "small enough to finish in a minute."
            ),
            StepSpec(
                instruction="Now map your example back onto the step and name "
                "the piece that was blocking you."
            ),
        ]

    def plan_lesson(
        self, instructor_input: dict, prior_summaries: list[int]
    ) -> LessonSpec:
        """Scripted planning reads the lesson spec named as the resource."""
        return plan_from_fixture(instructor_input["resources"][0], prior_summaries)


# -- remote agent ------------------------------------------------------------


@dataclass(slots=True)
class RemoteConfig:
    endpoint: str
    model: str = "tutor-default"
    api_key_env: str | None = None
    timeout_ms: int = 30_000


_PROMPTS_PATH = Path(__file__).parent / "fixtures" / "prompts.json"


def _load_prompts() -> dict:
    return json.loads(_PROMPTS_PATH.read_text(encoding="utf-8"))


class RemoteTeachingAgent:
    """Adapter onto an HTTP chat-completion endpoint.

    The request body is ``{"model": ..., "messages": [...]}`` and the answer
    is read from ``choices[0].message.content``.  Content may be a JSON
    object (``text``, ``tool_calls``, ``hint_level``, ``sub_steps``) or bare
    text.  Anything else, any transport error, and any timeout raises
    :class:`RemoteAgentError`; callers degrade, they do not crash.
    """

    def __init__(self, config: RemoteConfig, client=None) -> None:
        import httpx

        self._config = config
        self._prompts = _load_prompts()
        self._client = client or httpx.Client(
            timeout=config.timeout_ms / 1000.0
        )

    def _post(self, system_prompt: str, user_payload: dict) -> str:
        import httpx

        headers = {}
        if self._config.api_key_env:
            key = os.environ.get(self._config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        body = {
            "model": self._config.model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": json.dumps(user_payload)},
            ],
        }
        try:
            response = self._client.post(
                self._config.endpoint, json=body, headers=headers
            )
        except httpx.HTTPError as exc:
            log.warning("remote agent transport failure: %s", exc)
            raise RemoteAgentError(f"transport failure: {exc}") from None
        if response.status_code != 200:
            log.warning("remote agent answered %s", response.status_code)
            raise RemoteAgentError(f"endpoint answered {response.status_code}")
        try:
            content = response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError):
            raise RemoteAgentError("malformed completion payload") from None
        if not isinstance(content, str) or not content.strip():
            raise RemoteAgentError("empty completion")
        return content

    @staticmethod
    def _snapshot_payload(snapshot: ContextSnapshot) -> dict:
        return {
            "lesson": snapshot.lesson_title,
            "step_index": snapshot.step_index,
            "instruction": snapshot.instruction,
            "exercise": snapshot.exercise,
            "in_detour": snapshot.in_detour,
            "recent_chat": [list(turn) for turn in snapshot.recent_chat],
            "code_buffer": snapshot.code_buffer,
        }

    def teach(self, snapshot: ContextSnapshot, request: TeachInput) -> AgentReply:
        content = self._post(
            self._prompts["system_teach"],
            {
                "snapshot": self._snapshot_payload(snapshot),
                "request": {
                    "kind": request.kind,
                    "text": request.text,
                    "hint_level": request.hint_level,
                },
            },
        )
        try:
            parsed = json.loads(content)
        except json.JSONDecodeError:
            parsed = {"text": content}
        if not isinstance(parsed, dict) or not parsed.get("text"):
            raise RemoteAgentError("completion carried no reply text")
        try:
            calls = tuple(parse_tool_call(c) for c in parsed.get("tool_calls", []))
            for call in calls:
                validate_tool_call(call, snapshot.video_duration_s)
            return AgentReply(
                text=parsed["text"],
                tool_calls=calls,
                hint_level=parsed.get("hint_level", request.hint_level),
            )
        except AgentError as exc:
            raise RemoteAgentError(f"unusable reply: {exc}") from None

    def generate_sublesson(
        self, snapshot: ContextSnapshot, reason: str
    ) -> list[StepSpec]:
        content = self._post(
            self._prompts["system_sublesson"],
            {"snapshot": self._snapshot_payload(snapshot), "reason": reason},
        )
        try:
            parsed = json.loads(content)
            steps = [
                StepSpec(instruction=s["instruction"])
                for s in parsed["sub_steps"]
            ]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise RemoteAgentError("completion carried no sub_steps") from None
        if not 1 <= len(steps) <= 5:
            raise RemoteAgentError(f"sub-lesson of {len(steps)} steps is out of range")
        return steps

    def plan_lesson(
        self, instructor_input: dict, prior_summaries: list[int]
    ) -> LessonSpec:
        from .lesson import InvalidLessonSpec, parse_lesson_spec

        content = self._post(
            self._prompts["system_plan"],
            {"instructor_input": instructor_input},
        )
        try:
            spec = parse_lesson_spec(json.loads(content))
        except (json.JSONDecodeError, InvalidLessonSpec) as exc:
            raise RemoteAgentError(f"completion is not a lesson spec: {exc}") from None
        spec.informed_by = list(prior_summaries)
        return spec


def plan_from_fixture(
    fixture_path: str | Path, prior_summaries: list[int] | None = None
) -> LessonSpec:
    """Load a lesson spec file and stamp provenance onto it.

    The returned spec records which Summary nodes informed it; plan layout
    turns that into PLAN_STEP_INFORMED_BY edges.
    """
    from .lesson import load_lesson_spec

    spec = load_lesson_spec(fixture_path)
    spec.informed_by = list(prior_summaries or [])
    return spec


def plan_lesson(
    agent: TeachingAgent,
    instructor_input: dict,
    prior_summaries: list[int] | None = None,
) -> LessonSpec:
    """Have the planning side of an agent produce a lesson spec.

    ``instructor_input`` carries ``topic``, optional ``objectives``, and
    ``resources`` (for the scripted agent, the first resource is the path of
    a lesson spec file).

    Raises:
        InvalidInstructorInput: on a blank topic or no resources.
        RemoteAgentError: when a remote planner fails or answers garbage.
    """
    topic = instructor_input.get("topic")
    resources = instructor_input.get("resources")
    if not isinstance(topic, str) or not topic.strip():
        raise InvalidInstructorInput("topic must be a non-empty string")
    if not isinstance(resources, (list, tuple)) or not resources:
        raise InvalidInstructorInput("at least one resource is required")
    return agent.plan_lesson(dict(instructor_input), list(prior_summaries or []))


DEFAULT_SCRIPT_PATH = Path(__file__).parent / "fixtures" / "teaching_script.json"


@dataclass(slots=True)
class AgentConfig:
    """How to build the session's agent: a reply table or a live endpoint."""

    mode: str = "scripted"
    script_path: str | Path | None = None
    remote_endpoint: str | None = None
    remote_model: str = "tutor-default"
    api_key_env: str | None = None
    timeout_ms: int = 30_000

    def __post_init__(self) -> None:
        if self.mode not in ("scripted", "remote"):
            raise AgentError(f"unknown agent mode {self.mode!r}")
        if self.mode == "scripted" and self.script_path is None:
            self.script_path = DEFAULT_SCRIPT_PATH
        if self.mode == "remote" and not self.remote_endpoint:
            raise AgentError("remote mode requires an endpoint")

    def build(self) -> TeachingAgent:
        if self.mode == "scripted":
            return ScriptedTeachingAgent(load_script(self.script_path))
        return RemoteTeachingAgent(
            RemoteConfig(
                endpoint=self.remote_endpoint,
                model=self.remote_model,
                api_key_env=self.api_key_env,
                timeout_ms=self.timeout_ms,
            )
        )
