"""Lesson specifications, plan graphs, and detour surgery.

A lesson starts as a spec (title, resources, ordered steps) loaded from a
fixture file.  ``create_plan`` lays the spec into the graph as a Lesson node
with a NEXT_STEP chain of LessonStep nodes.  When a student gets stuck,
``insert_sublesson`` grafts a remedial chain onto the current step: the
sub-steps hang off their origin with SUB_STEP_OF edges and the last one
carries a RETURNS_FROM_SUB_STEP edge pointing back, so the walk resumes
where it left off.  The main chain is never rewired.

Exercise solutions are deliberately kept out of the graph.  They live on
the plan object, keyed by step node id, so no snapshot, export, or plan
serialization can carry them to the student.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .graph import EdgeKind, GraphStore, NodeKind, PropValue

__all__ = [
    "Segment",
    "VideoResource",
    "CodeExercise",
    "StepSpec",
    "LessonSpec",
    "LessonPlan",
    "Detour",
    "LessonError",
    "InvalidLessonSpec",
    "UnknownStep",
    "InvalidSubLesson",
    "DepthExceeded",
    "LessonNotFinished",
    "OpenDetour",
    "AlreadyCompleted",
    "MAX_DETOUR_DEPTH",
    "load_lesson_spec",
    "parse_lesson_spec",
    "create_plan",
    "rebuild_plan",
    "insert_sublesson",
    "traversal_order",
    "complete_run",
    "describe_plan",
]

MAX_DETOUR_DEPTH = 3


class LessonError(Exception):
    """Base class for lesson plan violations."""


class InvalidLessonSpec(LessonError):
    """A lesson spec is structurally unusable."""


class UnknownStep(LessonError):
    """A step node id does not belong to this plan."""


class InvalidSubLesson(LessonError):
    """A sub-lesson must bring one to five steps."""


class DepthExceeded(LessonError):
    """Detours may nest at most MAX_DETOUR_DEPTH deep."""


class LessonNotFinished(LessonError):
    """complete_run called before every step was worked through."""


class OpenDetour(LessonError):
    """complete_run called while a detour has unfinished sub-steps."""


class AlreadyCompleted(LessonError):
    """A run produces exactly one summary."""


@dataclass(frozen=True, slots=True)
class Segment:
    title: str
    start_s: float
    end_s: float


@dataclass(frozen=True, slots=True)
class VideoResource:
    ref: str
    duration_s: float
    segments: tuple[Segment, ...] = ()


@dataclass(frozen=True, slots=True)
class CodeExercise:
    ref: str
    solution: str


@dataclass(frozen=True, slots=True)
class StepSpec:
    """One teachable unit: what to say, watch, and (optionally) solve."""

    instruction: str
    video_segment: tuple[float, float] | None = None
    exercise: str | None = None
    solution: str | None = None


@dataclass(slots=True)
class LessonSpec:
    title: str
    objective: str
    video: VideoResource | None
    exercises: list[CodeExercise]
    steps: list[StepSpec]
    #: Summary node ids from earlier runs that shaped this spec.
    informed_by: list[int] = field(default_factory=list)

    def exercise_solution(self, ref: str) -> str | None:
        for exercise in self.exercises:
            if exercise.ref == ref:
                return exercise.solution
        return None


@dataclass(slots=True)
class Detour:
    """One inserted sub-lesson: its origin, its chain, its nesting depth."""

    origin_id: int
    sub_step_ids: list[int]
    depth: int

    @property
    def last_sub_id(self) -> int:
        return self.sub_step_ids[-1]


def load_lesson_spec(path: str | Path) -> LessonSpec:
    """Load and validate a lesson fixture file.

    Raises:
        InvalidLessonSpec: missing title, no steps, no resources, segments
            outside the video, or a step pointing at an unknown exercise.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidLessonSpec(f"cannot load lesson fixture {path}: {exc}") from None
    return parse_lesson_spec(raw)


def parse_lesson_spec(raw: dict) -> LessonSpec:
    if not isinstance(raw, dict):
        raise InvalidLessonSpec("lesson spec must be an object")
    title = raw.get("title")
    if not title or not isinstance(title, str):
        raise InvalidLessonSpec("lesson needs a non-empty title")
    objective = raw.get("objective") or ""
    video: VideoResource | None = None
    exercises: list[CodeExercise] = []
    for res in raw.get("resources", []):
        kind = res.get("kind")
        if kind == "video":
            segments = tuple(
                Segment(s["title"], float(s["start_s"]), float(s["end_s"]))
                for s in res.get("segments", [])
            )
            video = VideoResource(
                ref=res["ref"],
                duration_s=float(res["duration_s"]),
                segments=segments,
            )
        elif kind == "code":
            exercises.append(CodeExercise(ref=res["ref"], solution=res["solution"]))
        else:
            raise InvalidLessonSpec(f"unknown resource kind {kind!r}")
    if video is None and not exercises:
        raise InvalidLessonSpec("lesson needs at least one resource")
    if video is not None:
        if video.duration_s <= 0:
            raise InvalidLessonSpec("video duration must be positive")
        for seg in video.segments:
            if not (0 <= seg.start_s < seg.end_s <= video.duration_s):
                raise InvalidLessonSpec(
                    f"segment {seg.title!r} falls outside the video"
                )
    steps_raw = raw.get("steps", [])
    if not steps_raw:
        raise InvalidLessonSpec("lesson needs at least one step")
    steps: list[StepSpec] = []
    known_refs = {e.ref for e in exercises}
    for i, s in enumerate(steps_raw, start=1):
        instruction = s.get("instruction")
        if not instruction or not isinstance(instruction, str):
            raise InvalidLessonSpec(f"step {i} needs instruction text")
        segment = None
        if s.get("video_segment") is not None:
            start_s, end_s = s["video_segment"]
            if video is None or not (0 <= start_s < end_s <= video.duration_s):
                raise InvalidLessonSpec(f"step {i} video_segment out of range")
            segment = (float(start_s), float(end_s))
        exercise = s.get("exercise")
        if exercise is not None and exercise not in known_refs:
            raise InvalidLessonSpec(f"step {i} references unknown exercise {exercise!r}")
        steps.append(
            StepSpec(
                instruction=instruction,
                video_segment=segment,
                exercise=exercise,
                solution=s.get("solution"),
            )
        )
    return LessonSpec(
        title=title,
        objective=objective,
        video=video,
        exercises=exercises,
        steps=steps,
        informed_by=list(raw.get("informed_by", [])),
    )


class LessonPlan:
    """Runtime handle for one laid-out lesson: node ids, specs, detours.

    All structure also lives in the graph; the plan object is the fast path
    and the keeper of server-side secrets (solutions).
    """

    def __init__(self, store: GraphStore, lesson_id: int, spec: LessonSpec) -> None:
        self.store = store
        self.lesson_id = lesson_id
        self.spec = spec
        self.main_step_ids: list[int] = []
        self.detours: list[Detour] = []
        self.summary_id: int | None = None
        self._spec_by_node: dict[int, StepSpec] = {}
        self._solutions: dict[int, str] = {}
        self._detours_by_origin: dict[int, list[Detour]] = {}
        self._detour_by_sub: dict[int, Detour] = {}

    # -- registry ----------------------------------------------------------

    def _register_step(self, node_id: int, spec: StepSpec, solution: str | None) -> None:
        self._spec_by_node[node_id] = spec
        if solution:
            self._solutions[node_id] = solution

    def _register_detour(self, detour: Detour) -> None:
        self.detours.append(detour)
        self._detours_by_origin.setdefault(detour.origin_id, []).append(detour)
        for sid in detour.sub_step_ids:
            self._detour_by_sub[sid] = detour

    # -- queries -----------------------------------------------------------

    def contains(self, step_id: int) -> bool:
        return step_id in self._spec_by_node

    def step_spec(self, step_id: int) -> StepSpec:
        try:
            return self._spec_by_node[step_id]
        except KeyError:
            raise UnknownStep(f"step {step_id} is not part of this plan") from None

    def solution_for(self, step_id: int) -> str | None:
        return self._solutions.get(step_id)

    def detours_of(self, step_id: int) -> list[Detour]:
        return list(self._detours_by_origin.get(step_id, []))

    def detour_containing(self, step_id: int) -> Detour | None:
        return self._detour_by_sub.get(step_id)

    def is_sub_step(self, step_id: int) -> bool:
        return step_id in self._detour_by_sub

    def depth_of(self, step_id: int) -> int:
        detour = self._detour_by_sub.get(step_id)
        return 0 if detour is None else detour.depth

    def main_index_of(self, step_id: int) -> int | None:
        """1-based index on the main chain, None for sub-steps."""
        try:
            return self.main_step_ids.index(step_id) + 1
        except ValueError:
            return None

    def next_in_chain(self, step_id: int) -> int | None:
        """The NEXT_STEP successor, which never crosses chains."""
        self.step_spec(step_id)
        edges = self.store.out_edges(step_id, EdgeKind.NEXT_STEP)
        return edges[0].dst if edges else None

    @property
    def first_step_id(self) -> int:
        return self.main_step_ids[0]

    @property
    def last_step_id(self) -> int:
        return self.main_step_ids[-1]


def _step_props(spec: StepSpec, **extra: PropValue) -> dict[str, PropValue]:
    props: dict[str, PropValue] = {"instruction": spec.instruction}
    if spec.video_segment is not None:
        props["segment_start_s"] = spec.video_segment[0]
        props["segment_end_s"] = spec.video_segment[1]
    if spec.exercise is not None:
        props["exercise"] = spec.exercise
    props.update(extra)
    return props


def create_plan(
    store: GraphStore, spec: LessonSpec, prior_summaries: list[int] | None = None
) -> LessonPlan:
    """Lay a lesson spec into the graph and return the plan handle.

    Creates the Lesson node, one LessonStep per spec step joined by HAS_STEP
    and chained with NEXT_STEP, and, when ``prior_summaries`` is given, one
    PLAN_STEP_INFORMED_BY edge from the first step of this plan to each of
    those Summary nodes: the new plan is on record as having been shaped by
    what previous runs concluded.
    """
    if not spec.steps:
        raise InvalidLessonSpec("cannot lay out a lesson with no steps")
    lesson_props: dict[str, PropValue] = {
        "title": spec.title,
        "objective": spec.objective,
    }
    if spec.video is not None:
        lesson_props["video_ref"] = spec.video.ref
        lesson_props["video_duration_s"] = spec.video.duration_s
    lesson = store.add_node(NodeKind.LESSON, lesson_props)
    plan = LessonPlan(store, lesson.id, spec)
    previous: int | None = None
    for index, step_spec in enumerate(spec.steps, start=1):
        solution = step_spec.solution
        if solution is None and step_spec.exercise is not None:
            solution = spec.exercise_solution(step_spec.exercise)
        node = store.add_node(
            NodeKind.LESSON_STEP, _step_props(step_spec, index=index)
        )
        store.add_edge(EdgeKind.HAS_STEP, lesson.id, node.id)
        if previous is not None:
            store.add_edge(EdgeKind.NEXT_STEP, previous, node.id)
        plan.main_step_ids.append(node.id)
        plan._register_step(node.id, step_spec, solution)
        previous = node.id
    for summary_id in prior_summaries or spec.informed_by:
        store.add_edge(
            EdgeKind.PLAN_STEP_INFORMED_BY, plan.first_step_id, summary_id
        )
    return plan


def insert_sublesson(
    plan: LessonPlan,
    origin_id: int,
    sub_specs: list[StepSpec],
    max_depth: int = MAX_DETOUR_DEPTH,
) -> Detour:
    """Graft a remedial sub-lesson onto ``origin_id``.

    The sub-steps form their own NEXT_STEP chain; each points at the origin
    with SUB_STEP_OF and the last one adds RETURNS_FROM_SUB_STEP so the walk
    knows where to resume.  The origin's own edges are untouched.

    Raises:
        UnknownStep: origin is not a step of this plan.
        InvalidSubLesson: empty or oversized sub-lesson.
        DepthExceeded: origin already sits at the maximum nesting depth.
    """
    plan.step_spec(origin_id)
    if not 1 <= len(sub_specs) <= 5:
        raise InvalidSubLesson(
            f"sub-lesson must have 1..5 steps, got {len(sub_specs)}"
        )
    depth = plan.depth_of(origin_id) + 1
    if depth > max_depth:
        raise DepthExceeded(
            f"detour would nest {depth} deep, limit is {max_depth}"
        )
    store = plan.store
    sub_ids: list[int] = []
    previous: int | None = None
    for sub_index, sub_spec in enumerate(sub_specs, start=1):
        node = store.add_node(
            NodeKind.LESSON_STEP, _step_props(sub_spec, sub_index=sub_index)
        )
        store.add_edge(EdgeKind.SUB_STEP_OF, node.id, origin_id)
        if previous is not None:
            store.add_edge(EdgeKind.NEXT_STEP, previous, node.id)
        sub_ids.append(node.id)
        plan._register_step(node.id, sub_spec, sub_spec.solution)
        previous = node.id
    store.add_edge(EdgeKind.RETURNS_FROM_SUB_STEP, sub_ids[-1], origin_id)
    detour = Detour(origin_id=origin_id, sub_step_ids=sub_ids, depth=depth)
    plan._register_detour(detour)
    return detour


def traversal_order(plan: LessonPlan) -> list[int]:
    """The full visit order, walked from graph edges alone.

    Main steps appear in chain order.  A step with detours is preceded by
    its sub-lessons, expanded recursively in creation order: the student
    finishes the remedial work, then the origin, then moves on.  Every step
    appears exactly once, the origin at its resume point.
    """
    store = plan.store

    def sub_chains(step_id: int) -> list[list[int]]:
        subs = [e.src for e in store.in_edges(step_id, EdgeKind.SUB_STEP_OF)]
        sub_set = set(subs)
        heads = [
            sid
            for sid in subs
            if not any(
                e.src in sub_set for e in store.in_edges(sid, EdgeKind.NEXT_STEP)
            )
        ]
        chains = []
        for head in sorted(heads):
            chain = [head]
            while True:
                nxt = [
                    e.dst
                    for e in store.out_edges(chain[-1], EdgeKind.NEXT_STEP)
                    if e.dst in sub_set
                ]
                if not nxt:
                    break
                chain.append(nxt[0])
            chains.append(chain)
        return chains

    def expand(step_id: int) -> list[int]:
        order: list[int] = []
        for chain in sub_chains(step_id):
            for sub in chain:
                order.extend(expand(sub))
        order.append(step_id)
        return order

    full: list[int] = []
    for step_id in plan.main_step_ids:
        full.extend(expand(step_id))
    return full


def complete_run(
    plan: LessonPlan,
    session_id: str,
    summary_text: str,
    completed: set[int],
) -> int:
    """Close out a finished run with a Summary node.

    ``completed`` is the set of step node ids the student has worked
    through.  Every main step and every sub-step of every inserted detour
    must be in it.

    Returns the Summary node id.

    Raises:
        LessonNotFinished: a main step is missing from ``completed``.
        OpenDetour: a detour has unfinished sub-steps.
        AlreadyCompleted: this run already has its summary.
    """
    if plan.summary_id is not None:
        raise AlreadyCompleted("this run already produced its summary")
    for detour in plan.detours:
        if not set(detour.sub_step_ids) <= completed:
            raise OpenDetour(
                f"detour at step {detour.origin_id} has unfinished sub-steps"
            )
    missing = [sid for sid in plan.main_step_ids if sid not in completed]
    if missing:
        raise LessonNotFinished(
            f"{len(missing)} of {len(plan.main_step_ids)} main steps unfinished"
        )
    summary = plan.store.add_node(
        NodeKind.SUMMARY, {"text": summary_text, "session_id": session_id}
    )
    plan.store.add_edge(EdgeKind.HAS_SUMMARY, plan.lesson_id, summary.id)
    plan.summary_id = summary.id
    return summary.id


def rebuild_plan(store: GraphStore, lesson_id: int, spec: LessonSpec) -> LessonPlan:
    """Rehydrate a plan handle for a lesson already laid out in the graph.

    The graph holds the full structure (steps, chains, detours, summary);
    the spec re-supplies what the graph deliberately does not: solutions.
    Used after a process restart, when the snapshot has been re-imported
    but the in-memory handles are gone.

    Raises:
        InvalidLessonSpec: the graph's main chain does not line up with the
            spec's steps.
    """
    lesson = store.node(lesson_id)
    if lesson.kind != NodeKind.LESSON:
        raise InvalidLessonSpec(f"node {lesson_id} is not a Lesson")
    plan = LessonPlan(store, lesson_id, spec)
    main_nodes = sorted(
        (store.node(e.dst) for e in store.out_edges(lesson_id, EdgeKind.HAS_STEP)),
        key=lambda n: n.props["index"],
    )
    if len(main_nodes) != len(spec.steps):
        raise InvalidLessonSpec(
            f"graph has {len(main_nodes)} steps, spec has {len(spec.steps)}"
        )
    for node, step_spec in zip(main_nodes, spec.steps):
        solution = step_spec.solution
        if solution is None and step_spec.exercise is not None:
            solution = spec.exercise_solution(step_spec.exercise)
        plan.main_step_ids.append(node.id)
        plan._register_step(node.id, step_spec, solution)

    def spec_from_props(props: dict) -> StepSpec:
        segment = None
        if "segment_start_s" in props:
            segment = (props["segment_start_s"], props["segment_end_s"])
        return StepSpec(
            instruction=props["instruction"],
            video_segment=segment,
            exercise=props.get("exercise"),
        )

    def register_detours(origin_id: int, depth: int) -> None:
        subs = [e.src for e in store.in_edges(origin_id, EdgeKind.SUB_STEP_OF)]
        sub_set = set(subs)
        heads = [
            sid
            for sid in subs
            if not any(
                e.src in sub_set for e in store.in_edges(sid, EdgeKind.NEXT_STEP)
            )
        ]
        for head in sorted(heads):
            chain = [head]
            while True:
                nexts = [
                    e.dst
                    for e in store.out_edges(chain[-1], EdgeKind.NEXT_STEP)
                    if e.dst in sub_set
                ]
                if not nexts:
                    break
                chain.append(nexts[0])
            for sid in chain:
                plan._register_step(sid, spec_from_props(store.node(sid).props), None)
            plan._register_detour(
                Detour(origin_id=origin_id, sub_step_ids=chain, depth=depth)
            )
            for sid in chain:
                register_detours(sid, depth + 1)

    for node in main_nodes:
        register_detours(node.id, 1)
    summaries = store.out_edges(lesson_id, EdgeKind.HAS_SUMMARY)
    if summaries:
        plan.summary_id = summaries[-1].dst
    return plan


def describe_plan(plan: LessonPlan, position: int | None = None) -> dict:
    """Student-facing plan serialization.  Never includes solutions."""

    def step_view(step_id: int, index: int | None, sub_index: int | None) -> dict:
        spec = plan.step_spec(step_id)
        view: dict = {
            "node_id": step_id,
            "instruction": spec.instruction,
            "video_segment": list(spec.video_segment) if spec.video_segment else None,
            "has_exercise": spec.exercise is not None,
            "current": step_id == position,
        }
        if index is not None:
            view["index"] = index
        if sub_index is not None:
            view["sub_index"] = sub_index
        detours = plan.detours_of(step_id)
        view["detours"] = [
            {
                "returns_to": d.origin_id,
                "sub_steps": [
                    step_view(sid, None, j + 1)
                    for j, sid in enumerate(d.sub_step_ids)
                ],
            }
            for d in detours
        ]
        return view

    return {
        "lesson_id": plan.lesson_id,
        "title": plan.spec.title,
        "objective": plan.spec.objective,
        "video": {
            "ref": plan.spec.video.ref,
            "duration_s": plan.spec.video.duration_s,
        }
        if plan.spec.video
        else None,
        "steps": [
            step_view(sid, i + 1, None)
            for i, sid in enumerate(plan.main_step_ids)
        ],
        "position": position,
    }
