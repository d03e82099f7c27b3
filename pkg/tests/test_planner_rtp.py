from __future__ import annotations

import re

import numpy as np
import pytest

from timeline_qa.backends.scripted import PatternLLM, ScriptedLLM
from timeline_qa.backends.world import (
    PlannerPolicy,
    ScriptedEvent,
    ScriptedVideo,
    ScriptedWorld,
)
from timeline_qa.consistency.refiner import RefinementDelta
from timeline_qa.core.types import (
    BudgetConfig,
    EpisodeOrigin,
    Query,
    TemporalInterval,
    VideoDescriptor,
)
from timeline_qa.core.validation import OVERLAP_TOLERANCE_S, union_length, validate_interval
from timeline_qa.errors import ParseError, RetriesExhaustedError
from timeline_qa.planner.rtp import (
    PlannerState,
    apply_refinement,
    build_rtp_prompt,
    fallback_window,
    parse_segment_reply,
    plan_next_episode,
    propose_next_segment,
    random_window,
)

VIDEO = VideoDescriptor.from_duration("v", 600.0)
CFG = BudgetConfig()
QUERY = Query("Where is the dog?", VIDEO)


def _axis(i: int, dim: int = 4) -> tuple[float, ...]:
    return tuple(1.0 if j == i else 0.0 for j in range(dim))


def _world(duration: float) -> ScriptedWorld:
    descriptor = VideoDescriptor.from_duration("v", duration)
    events = tuple(
        ScriptedEvent(
            event_id=f"e{i}",
            interval=TemporalInterval(duration * f, duration * (f + 0.05)),
            description=f"event number {i}",
            embedding=_axis(i + 1),
        )
        for i, f in enumerate((0.1, 0.45, 0.8))
    )
    return ScriptedWorld(
        world_id=f"fuzz-{int(duration)}",
        dimension=4,
        videos=(ScriptedVideo(descriptor, events, _axis(0)),),
        text_embeddings=(("what happens", _axis(2)),),
    )


def _reference_pairs(raw: str) -> tuple[float, float] | None:
    for match in re.finditer(r"\[\s*([^,\[\]]+?)\s*,\s*([^,\[\]]+?)\s*\]", raw):
        try:
            return float(match.group(1).strip("\"'")), float(match.group(2).strip("\"'"))
        except ValueError:
            continue
    return None


def test_prompt_lists_reviewed_segments_and_constraints() -> None:
    empty = build_rtp_prompt(PlannerState(QUERY), VIDEO, CFG)
    assert empty.system.startswith("You are an intelligent video analyst.")
    assert empty.system.endswith("Here are the segments already analyzed: None")
    assert '- Question: "Where is the dog?"' in empty.user
    assert "Total Video Duration: 600 seconds" in empty.user
    assert "must NOT exceed 180 seconds" in empty.user
    assert empty.user.endswith("Return ONLY the JSON array and nothing else.")

    state = PlannerState(QUERY).with_reviewed(TemporalInterval(0, 120), irrelevant=True)
    state = state.with_reviewed(TemporalInterval(240.4, 300.6))
    prompt = build_rtp_prompt(state.with_digest("[0–120] a quiet street (support 1)"), VIDEO, CFG)
    assert "[0, 120] (irrelevant), [240, 301]" in prompt.system
    assert "History record:\n[0–120] a quiet street (support 1)" in prompt.system


def test_prompt_is_deterministic() -> None:
    state = PlannerState(QUERY, reviewed=(TemporalInterval(10, 100),))
    assert build_rtp_prompt(state, VIDEO, CFG) == build_rtp_prompt(state, VIDEO, CFG)


@pytest.mark.parametrize(
    ("raw", "expected"),
    [
        ("[30, 180]", (30.0, 180.0)),
        ("Sure! Here it is:\n```json\n[30, 180]\n```", (30.0, 180.0)),
        ('["12.5", "40"]', (12.5, 40.0)),
        ("[1, 2, 3] and then [4, 5]", (4.0, 5.0)),
        ("[a, b] or [7, 9.5]", (7.0, 9.5)),
    ],
)
def test_parse_segment_reply(raw: str, expected: tuple[float, float]) -> None:
    interval = parse_segment_reply(raw)
    assert (interval.start_s, interval.end_s) == expected
    assert _reference_pairs(raw) == expected


@pytest.mark.parametrize(
    ("raw", "reason"),
    [
        ("watch minute 3", "no-array-found"),
        ("[1, 2, 3]", "wrong-arity"),
        ("[]", "wrong-arity"),
        ("[a, b]", "non-numeric"),
        ("[nan, 5]", "non-numeric"),
    ],
)
def test_parse_segment_reply_errors(raw: str, reason: str) -> None:
    with pytest.raises(ParseError) as excinfo:
        parse_segment_reply(raw)
    assert excinfo.value.reason == reason


def test_propose_reprompts_with_rejection_reason() -> None:
    llm = PatternLLM({"Total Video Duration": ["[0, 600]", "[10, 150]"]})
    proposal = propose_next_segment(PlannerState(QUERY), VIDEO, CFG, llm)
    assert proposal.interval == TemporalInterval(10, 150)
    assert proposal.attempts == 2
    assert [r.reason for r in proposal.rejections] == ["whole-video"]
    assert "rejected (whole-video)" in llm.call_history[1]["user"]
    assert "rejected" not in llm.call_history[0]["user"]


def test_propose_raises_after_retry_limit() -> None:
    llm = PatternLLM(default="let me think about it")
    with pytest.raises(RetriesExhaustedError) as excinfo:
        propose_next_segment(PlannerState(QUERY), VIDEO, CFG, llm)
    assert excinfo.value.attempts == CFG.retry_limit
    assert excinfo.value.last_reason == "no-array-found"
    assert len(llm.call_history) == CFG.retry_limit


def test_propose_rejects_already_reviewed() -> None:
    state = PlannerState(QUERY, reviewed=(TemporalInterval(0, 180),))
    llm = PatternLLM({"Total Video Duration": ["[100, 200]", "[180, 300]"]})
    proposal = propose_next_segment(state, VIDEO, CFG, llm)
    assert proposal.interval == TemporalInterval(180, 300)
    assert proposal.rejections[0].reason == "already-reviewed"


@pytest.mark.parametrize(
    ("interval", "center", "scale", "expected"),
    [
        ((100, 200), 300.0, 1.0, (250, 350)),
        ((100, 200), 150.0, 1.0, (100, 200)),
        ((0, 100), -50.0, 1.0, (0, 100)),
        ((100, 200), 300.0, 0.5, (275, 325)),
        ((100, 200), 590.0, 1.0, (500, 600)),
    ],
)
def test_apply_refinement(
    interval: tuple[float, float],
    center: float,
    scale: float,
    expected: tuple[float, float],
) -> None:
    delta = RefinementDelta(suggested_center_s=center, scale=scale, loss_contribution=0.1)
    refined = apply_refinement(TemporalInterval(*interval), delta, VIDEO, CFG)
    assert refined.start_s == pytest.approx(expected[0])
    assert refined.end_s == pytest.approx(expected[1])


def test_plan_next_episode_applies_feedback_once() -> None:
    llm = PatternLLM({"Total Video Duration": "[200, 380]\nPurpose: find the dog"})
    state = PlannerState(
        QUERY,
        reviewed=(TemporalInterval(0, 180),),
        last_feedback=RefinementDelta(suggested_center_s=300.0, scale=0.5, loss_contribution=0.7),
    )
    planned = plan_next_episode(state, VIDEO, CFG, llm, iteration=2)
    assert planned.episode.origin is EpisodeOrigin.REFINED
    assert planned.episode.interval == TemporalInterval(255, 345)
    assert planned.episode.intent == "find the dog"
    assert planned.state.used_centers == (300.0,)

    again = plan_next_episode(planned.state, VIDEO, CFG, llm, iteration=3)
    assert again.episode.origin is EpisodeOrigin.PLANNED
    assert again.episode.interval == TemporalInterval(200, 380)


def test_plan_next_episode_synthesizes_intent() -> None:
    llm = PatternLLM({"Total Video Duration": "[200, 380]"})
    planned = plan_next_episode(PlannerState(QUERY), VIDEO, CFG, llm, iteration=1)
    assert planned.episode.intent == "inspect [200,380] for: Where is the dog?"
    assert planned.episode.origin is EpisodeOrigin.PLANNED


def _assert_valid(
    interval: TemporalInterval,
    duration: float,
    reviewed: tuple[TemporalInterval, ...],
) -> None:
    assert interval.end_s > interval.start_s
    assert interval.end_s - interval.start_s <= CFG.max_segment_s + 1e-9
    assert interval.start_s >= 0.0
    assert interval.end_s <= duration
    assert not (interval.start_s <= 0.0 and interval.end_s >= duration)
    for r in reviewed:
        overlap = min(interval.end_s, r.end_s) - max(interval.start_s, r.start_s)
        assert overlap <= OVERLAP_TOLERANCE_S


def test_planner_fuzz_never_accepts_invalid_interval() -> None:
    rng = np.random.default_rng(20240611)
    worlds = {d: _world(d) for d in (90.0, 600.0, 1200.0, 3000.0)}
    query_text = "What happens after the door opens?"
    accepted = exhausted = 0
    for round_index in range(1000):
        duration = float(rng.choice(list(worlds)))
        policy = PlannerPolicy.ALL[round_index % len(PlannerPolicy.ALL)]
        world = worlds[duration].with_policy(policy)
        video = world.descriptor("v")
        reviewed_list = []
        for _ in range(int(rng.integers(0, 5))):
            start = float(rng.uniform(0.0, duration - 1.0))
            length = float(rng.uniform(1.0, CFG.max_segment_s))
            reviewed_list.append(TemporalInterval(start, min(duration, start + length)))
        reviewed = tuple(reviewed_list)
        state = PlannerState(Query(query_text, video), reviewed=reviewed)
        try:
            proposal = propose_next_segment(state, video, CFG, ScriptedLLM(world))
        except RetriesExhaustedError:
            exhausted += 1
            continue
        accepted += 1
        _assert_valid(proposal.interval, duration, reviewed)
    assert accepted > 0
    assert exhausted > 0


def test_heuristic_planner_explores_monotonically() -> None:
    world = _world(600.0)
    video = world.descriptor("v")
    llm = ScriptedLLM(world)
    state = PlannerState(Query("What happens next?", video))
    covered = 0.0
    for _ in range(50):
        try:
            proposal = propose_next_segment(state, video, CFG, llm)
        except RetriesExhaustedError:
            break
        _assert_valid(proposal.interval, 600.0, state.reviewed)
        state = state.with_reviewed(proposal.interval)
        now = union_length(state.reviewed)
        assert now > covered
        covered = now
    else:
        pytest.fail("planner kept proposing after the whole video was reviewed")
    assert covered >= 570.0


def test_fallback_window_uses_longest_gap() -> None:
    assert fallback_window(VIDEO, (TemporalInterval(0, 180),), CFG) == TemporalInterval(180, 360)
    full = tuple(TemporalInterval(s, min(s + 180, 600)) for s in (0, 180, 360, 540))
    assert fallback_window(VIDEO, full, CFG) is None


def test_random_window_is_seeded_and_fits_unreviewed_gaps() -> None:
    reviewed = (TemporalInterval(100, 250), TemporalInterval(300, 400))
    first = random_window(VIDEO, reviewed, CFG, np.random.default_rng(3))
    second = random_window(VIDEO, reviewed, CFG, np.random.default_rng(3))
    assert first == second
    rng = np.random.default_rng(11)
    for _ in range(200):
        window = random_window(VIDEO, reviewed, CFG, rng)
        assert window.length == pytest.approx(180.0)
        assert 400.0 <= window.start_s <= 420.0
        assert validate_interval(window, VIDEO, reviewed, CFG).accepted


def test_random_window_next_to_reviewed_region_is_always_valid() -> None:
    reviewed = (TemporalInterval(200, 380),)
    rng = np.random.default_rng(0)
    starts = []
    for _ in range(1000):
        window = random_window(VIDEO, reviewed, CFG, rng)
        assert validate_interval(window, VIDEO, reviewed, CFG).accepted, window
        starts.append(window.start_s)
    assert any(s <= 20.0 for s in starts)
    assert any(s >= 380.0 for s in starts)


def test_random_window_exact_fit_and_no_fit() -> None:
    exact = (TemporalInterval(0, 210), TemporalInterval(390, 600))
    window = random_window(VIDEO, exact, CFG, np.random.default_rng(1))
    assert window == TemporalInterval(210, 390)

    crowded = (TemporalInterval(0, 250), TemporalInterval(300, 600))
    window = random_window(VIDEO, crowded, CFG, np.random.default_rng(1))
    assert window.length == pytest.approx(180.0)
    assert 0.0 <= window.start_s <= 420.0


def test_random_window_on_short_video_avoids_whole_video() -> None:
    short = VideoDescriptor.from_duration("s", 60.0)
    window = random_window(short, (), CFG, np.random.default_rng(0))
    assert window.length == pytest.approx(59.0)
