"""Lesson plan layout, detour surgery, and traversal tests.

The traversal oracle expands detours recursively from the plan's own detour
records (creation order), while the implementation walks graph edges; the
two routes must agree on every randomized case.
"""

from __future__ import annotations

import random
from pathlib import Path

import pytest

from itas.graph import EdgeKind, GraphStore, NodeKind, dumps_snapshot
from itas.lesson import (
    AlreadyCompleted,
    DepthExceeded,
    Detour,
    InvalidLessonSpec,
    InvalidSubLesson,
    LessonNotFinished,
    LessonPlan,
    LessonSpec,
    OpenDetour,
    StepSpec,
    UnknownStep,
    complete_run,
    create_plan,
    describe_plan,
    insert_sublesson,
    load_lesson_spec,
    parse_lesson_spec,
    traversal_order,
)

FIXTURE = Path(__file__).resolve().parents[1] / "src/itas/fixtures/quantum_fundamentals.json"


def toy_spec(n_steps: int) -> LessonSpec:
    return LessonSpec(
        title="toy",
        objective="",
        video=None,
        exercises=[],
        steps=[StepSpec(instruction=f"do part {i}") for i in range(1, n_steps + 1)],
    )


def fresh_plan(n_steps: int = 5):
    store = GraphStore(clock=lambda: 1_000)
    plan = create_plan(store, toy_spec(n_steps))
    return store, plan


def sub_specs(k: int, tag: str = "x") -> list[StepSpec]:
    return [StepSpec(instruction=f"review {tag} {i}") for i in range(1, k + 1)]


def oracle_traversal(main_ids: list[int], detours: list[Detour]) -> list[int]:
    """Reference expansion from detour records, not graph edges."""
    by_origin: dict[int, list[list[int]]] = {}
    for d in detours:
        by_origin.setdefault(d.origin_id, []).append(list(d.sub_step_ids))

    def expand(sid: int) -> list[int]:
        out: list[int] = []
        for subs in by_origin.get(sid, []):
            for sub in subs:
                out.extend(expand(sub))
        out.append(sid)
        return out

    order: list[int] = []
    for sid in main_ids:
        order.extend(expand(sid))
    return order


def test_create_plan_lays_out_chain_edges():
    store, plan = fresh_plan(7)
    assert len(plan.main_step_ids) == 7
    assert len(store.out_edges(plan.lesson_id, EdgeKind.HAS_STEP)) == 7
    assert len(store.edges(EdgeKind.NEXT_STEP)) == 6
    for a, b in zip(plan.main_step_ids, plan.main_step_ids[1:]):
        assert store.has_edge(EdgeKind.NEXT_STEP, a, b)
    assert [store.node(s).props["index"] for s in plan.main_step_ids] == list(range(1, 8))


def test_insert_sublesson_wires_the_detour():
    store, plan = fresh_plan(5)
    origin = plan.main_step_ids[2]
    detour = insert_sublesson(plan, origin, sub_specs(3))
    assert len(detour.sub_step_ids) == 3
    for sid in detour.sub_step_ids:
        assert store.has_edge(EdgeKind.SUB_STEP_OF, sid, origin)
    a, b, c = detour.sub_step_ids
    assert store.has_edge(EdgeKind.NEXT_STEP, a, b)
    assert store.has_edge(EdgeKind.NEXT_STEP, b, c)
    assert store.has_edge(EdgeKind.RETURNS_FROM_SUB_STEP, c, origin)
    assert not store.has_edge(EdgeKind.RETURNS_FROM_SUB_STEP, a, origin)


def test_main_chain_untouched_by_detours():
    store, plan = fresh_plan(5)
    before = [
        (e.src, e.dst)
        for e in store.edges(EdgeKind.NEXT_STEP)
    ]
    insert_sublesson(plan, plan.main_step_ids[1], sub_specs(4))
    insert_sublesson(plan, plan.main_step_ids[1], sub_specs(2, "again"))
    main = set(plan.main_step_ids)
    main_chain_now = [
        (e.src, e.dst)
        for e in store.edges(EdgeKind.NEXT_STEP)
        if e.src in main or e.dst in main
    ]
    assert main_chain_now == before
    for sid in plan.main_step_ids:
        outgoing = [e for e in store.out_edges(sid, EdgeKind.NEXT_STEP) if e.dst in main]
        incoming = [e for e in store.in_edges(sid, EdgeKind.NEXT_STEP) if e.src in main]
        assert len(outgoing) <= 1 and len(incoming) <= 1


def test_detour_depth_is_capped():
    store, plan = fresh_plan(3)
    d1 = insert_sublesson(plan, plan.main_step_ids[0], sub_specs(2))
    d2 = insert_sublesson(plan, d1.sub_step_ids[0], sub_specs(2))
    d3 = insert_sublesson(plan, d2.sub_step_ids[0], sub_specs(2))
    assert (d1.depth, d2.depth, d3.depth) == (1, 2, 3)
    with pytest.raises(DepthExceeded):
        insert_sublesson(plan, d3.sub_step_ids[0], sub_specs(1))


def test_sub_lesson_size_limits():
    store, plan = fresh_plan(3)
    with pytest.raises(InvalidSubLesson):
        insert_sublesson(plan, plan.main_step_ids[0], [])
    with pytest.raises(InvalidSubLesson):
        insert_sublesson(plan, plan.main_step_ids[0], sub_specs(6))
    with pytest.raises(UnknownStep):
        insert_sublesson(plan, 424242, sub_specs(1))


def test_traversal_plain_chain_is_the_chain():
    store, plan = fresh_plan(4)
    assert traversal_order(plan) == plan.main_step_ids


def test_traversal_places_origin_at_its_resume_point():
    store, plan = fresh_plan(6)
    s = plan.main_step_ids
    detour = insert_sublesson(plan, s[4], sub_specs(3))
    expected = s[:4] + detour.sub_step_ids + [s[4], s[5]]
    assert traversal_order(plan) == expected


def test_traversal_expands_nested_detours_innermost_first():
    store, plan = fresh_plan(3)
    s = plan.main_step_ids
    outer = insert_sublesson(plan, s[1], sub_specs(3))
    inner = insert_sublesson(plan, outer.sub_step_ids[1], sub_specs(2))
    expected = [
        s[0],
        outer.sub_step_ids[0],
        inner.sub_step_ids[0],
        inner.sub_step_ids[1],
        outer.sub_step_ids[1],
        outer.sub_step_ids[2],
        s[1],
        s[2],
    ]
    assert traversal_order(plan) == expected


def test_traversal_matches_oracle_on_randomized_plans():
    """100 randomized (plan size, confusion points, sub lengths) cases."""
    rng = random.Random(1234)
    for case in range(100):
        store = GraphStore(clock=lambda: 5)
        plan = create_plan(store, toy_spec(rng.randrange(1, 16)))
        all_steps = list(plan.main_step_ids)
        for _ in range(rng.randrange(0, 7)):
            origin = rng.choice(all_steps)
            if plan.depth_of(origin) >= 3:
                continue
            detour = insert_sublesson(plan, origin, sub_specs(rng.randrange(1, 6)))
            all_steps.extend(detour.sub_step_ids)
        got = traversal_order(plan)
        want = oracle_traversal(plan.main_step_ids, plan.detours)
        assert got == want, f"case {case}"
        assert sorted(got) == sorted(all_steps)  # every step exactly once


def test_complete_run_rejects_unfinished_lessons():
    store, plan = fresh_plan(15)
    done = set(plan.main_step_ids[:3])
    with pytest.raises(LessonNotFinished):
        complete_run(plan, "s1", "summary", done)


def test_complete_run_rejects_open_detours():
    store, plan = fresh_plan(4)
    detour = insert_sublesson(plan, plan.main_step_ids[2], sub_specs(3))
    done = set(plan.main_step_ids) | set(detour.sub_step_ids[:1])
    with pytest.raises(OpenDetour):
        complete_run(plan, "s1", "summary", done)


def test_complete_run_writes_one_summary():
    store, plan = fresh_plan(4)
    detour = insert_sublesson(plan, plan.main_step_ids[1], sub_specs(2))
    done = set(plan.main_step_ids) | set(detour.sub_step_ids)
    summary_id = complete_run(plan, "s1", "went well", done)
    summaries = store.nodes(NodeKind.SUMMARY)
    assert [n.id for n in summaries] == [summary_id]
    assert store.has_edge(EdgeKind.HAS_SUMMARY, plan.lesson_id, summary_id)
    assert store.node(summary_id).props["text"] == "went well"
    with pytest.raises(AlreadyCompleted):
        complete_run(plan, "s1", "again", done)


def test_new_plan_records_what_informed_it():
    store, plan = fresh_plan(3)
    summary_id = complete_run(plan, "s1", "s", set(plan.main_step_ids))
    second = create_plan(store, toy_spec(4), prior_summaries=[summary_id])
    edges = store.out_edges(second.first_step_id, EdgeKind.PLAN_STEP_INFORMED_BY)
    assert [(e.src, e.dst) for e in edges] == [(second.first_step_id, summary_id)]
    for later in second.main_step_ids[1:]:
        assert store.out_edges(later, EdgeKind.PLAN_STEP_INFORMED_BY) == []


# -- fixture and serialization --------------------------------------------


def test_canonical_fixture_loads():
    spec = load_lesson_spec(FIXTURE)
    assert spec.title == "Quantum Algorithm Fundamentals: From Queries to Factoring"
    assert len(spec.steps) == 15
    assert spec.video is not None and spec.video.duration_s == 5400
    assert len(spec.video.segments) == 15
    assert {e.ref for e in spec.exercises} == {"bv-secret-string", "modexp-order-finding"}
    solved = [s for s in spec.steps if s.exercise]
    assert len(solved) == 2


def test_spec_validation_rejects_broken_fixtures():
    with pytest.raises(InvalidLessonSpec):
        parse_lesson_spec({"title": "", "steps": [{"instruction": "x"}]})
    with pytest.raises(InvalidLessonSpec):
        parse_lesson_spec({"title": "t", "resources": [], "steps": []})
    with pytest.raises(InvalidLessonSpec):
        parse_lesson_spec(
            {
                "title": "t",
                "resources": [{"kind": "video", "ref": "v", "duration_s": 10, "segments": []}],
                "steps": [{"instruction": "x", "video_segment": [5, 50]}],
            }
        )
    with pytest.raises(InvalidLessonSpec):
        parse_lesson_spec(
            {
                "title": "t",
                "resources": [{"kind": "video", "ref": "v", "duration_s": 100, "segments": []}],
                "steps": [{"instruction": "x", "exercise": "nope"}],
            }
        )


def test_solutions_never_reach_graph_or_plan_view():
    store = GraphStore(clock=lambda: 9)
    spec = load_lesson_spec(FIXTURE)
    plan = create_plan(store, spec)
    snapshot_text = dumps_snapshot(store)
    # Distinctive tokens from both bundled solutions.
    for marker in ("controlled_modmul", "continued_fraction_denominator", "bv_secret"):
        assert marker not in snapshot_text
    view = describe_plan(plan, position=plan.first_step_id)

    def walk(obj):
        if isinstance(obj, dict):
            assert "solution" not in obj
            for v in obj.values():
                walk(v)
        elif isinstance(obj, list):
            for v in obj:
                walk(v)

    walk(view)
    import json

    text = json.dumps(view)
    for marker in ("controlled_modmul", "continued_fraction_denominator"):
        assert marker not in text
    assert plan.solution_for(plan.main_step_ids[13]) is not None
    assert "controlled_modmul" in plan.solution_for(plan.main_step_ids[13])


def test_describe_plan_nests_detours():
    store, plan = fresh_plan(3)
    detour = insert_sublesson(plan, plan.main_step_ids[1], sub_specs(2))
    view = describe_plan(plan, position=detour.sub_step_ids[0])
    step_view = view["steps"][1]
    assert step_view["detours"][0]["returns_to"] == plan.main_step_ids[1]
    subs = step_view["detours"][0]["sub_steps"]
    assert [s["sub_index"] for s in subs] == [1, 2]
    assert subs[0]["current"] is True
    assert view["position"] == detour.sub_step_ids[0]


def test_rebuild_plan_round_trips_from_graph():
    from itas.lesson import rebuild_plan

    store = GraphStore(clock=lambda: 11)
    spec = load_lesson_spec(FIXTURE)
    plan = create_plan(store, spec)
    outer = insert_sublesson(plan, plan.main_step_ids[3], sub_specs(3, "outer"))
    insert_sublesson(plan, outer.sub_step_ids[1], sub_specs(2, "inner"))
    insert_sublesson(plan, plan.main_step_ids[8], sub_specs(1, "late"))

    rebuilt = rebuild_plan(store, plan.lesson_id, spec)
    assert rebuilt.main_step_ids == plan.main_step_ids
    assert traversal_order(rebuilt) == traversal_order(plan)
    for step_id in traversal_order(plan):
        assert rebuilt.step_spec(step_id).instruction == plan.step_spec(step_id).instruction
        assert rebuilt.detour_containing(step_id) == plan.detour_containing(step_id)
        assert rebuilt.depth_of(step_id) == plan.depth_of(step_id)
    # main-chain solutions come back from the spec, detour steps carry none
    for step_id in plan.main_step_ids:
        assert rebuilt.solution_for(step_id) == plan.solution_for(step_id)
    assert rebuilt.solution_for(outer.sub_step_ids[0]) is None
    assert describe_plan(rebuilt, plan.main_step_ids[3]) == describe_plan(
        plan, plan.main_step_ids[3]
    )


def test_rebuild_plan_carries_summary_and_rejects_mismatch():
    from itas.lesson import rebuild_plan

    store, plan = fresh_plan(2)
    complete_run(plan, "s1", "all done", set(plan.main_step_ids))
    rebuilt = rebuild_plan(store, plan.lesson_id, toy_spec(2))
    assert rebuilt.summary_id == plan.summary_id is not None
    with pytest.raises(InvalidLessonSpec):
        rebuild_plan(store, plan.lesson_id, toy_spec(3))
