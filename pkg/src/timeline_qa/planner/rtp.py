from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace
from typing import Protocol

import numpy as np

from timeline_qa.consistency.refiner import RefinementDelta
from timeline_qa.core.codec import register
from timeline_qa.core.types import (
    BudgetConfig,
    EpisodeOrigin,
    PromptPair,
    Query,
    ReasoningEpisode,
    TemporalInterval,
    VideoDescriptor,
    format_seconds,
)
from timeline_qa.core.validation import unreviewed_gaps, validate_interval
from timeline_qa.errors import ParseError, RetriesExhaustedError
from timeline_qa.planner.prompts import build_rtp_prompt_text, retry_suffix

LOGGER = logging.getLogger(__name__)

_BRACKETED = re.compile(r"\[([^\[\]]*)\]")
_PURPOSE = re.compile(r"^\s*purpose\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)

# Smallest unreviewed gap worth a fallback window.
MIN_FALLBACK_GAP_S = 1.0


class CompletionPort(Protocol):
    def complete(self, system: str, user: str) -> str: ...


@register
@dataclass(frozen=True)
class PlannerState:
    query: Query
    reviewed: tuple[TemporalInterval, ...] = ()
    memory_digest: str = ""
    last_feedback: RefinementDelta | None = None
    irrelevant: tuple[TemporalInterval, ...] = ()
    used_centers: tuple[float, ...] = ()

    def with_reviewed(
        self, interval: TemporalInterval, *, irrelevant: bool = False
    ) -> PlannerState:
        return replace(
            self,
            reviewed=self.reviewed + (interval,),
            irrelevant=self.irrelevant + ((interval,) if irrelevant else ()),
        )

    def with_feedback(self, delta: RefinementDelta | None) -> PlannerState:
        return replace(self, last_feedback=delta)

    def with_digest(self, digest: str) -> PlannerState:
        return replace(self, memory_digest=digest)


@register
@dataclass(frozen=True)
class Rejection:
    reply: str
    reason: str


@register
@dataclass(frozen=True)
class SegmentProposal:
    interval: TemporalInterval
    raw_reply: str
    attempts: int
    rejections: tuple[Rejection, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.attempts < 1:
            raise ValueError("attempts must be positive")


def build_rtp_prompt(state: PlannerState, video: VideoDescriptor, cfg: BudgetConfig) -> PromptPair:
    return build_rtp_prompt_text(
        question=state.query.formatted(),
        video=video,
        max_segment_s=cfg.max_segment_s,
        reviewed=state.reviewed,
        irrelevant=state.irrelevant,
        memory_digest=state.memory_digest,
    )


def parse_segment_reply(raw: str) -> TemporalInterval:
    """Extract the first two-element numeric array from a reply.

    Prose and code fences around the array are ignored. The interval is returned unvalidated.
    """

    groups = _BRACKETED.findall(raw)
    if not groups:
        raise ParseError("no-array-found", "no [start, end] array found in reply")
    first_error: ParseError | None = None
    for body in groups:
        items = [item.strip().strip("\"'") for item in body.split(",")]
        if len(items) != 2 or not all(items):
            first_error = first_error or ParseError(
                "wrong-arity", f"expected 2 elements, got {len([i for i in items if i])}"
            )
            continue
        try:
            start, end = float(items[0]), float(items[1])
        except ValueError:
            first_error = first_error or ParseError(
                "non-numeric", f"array elements are not numeric: [{body.strip()}]"
            )
            continue
        if not (math.isfinite(start) and math.isfinite(end)):
            first_error = first_error or ParseError(
                "non-numeric", f"array elements are not finite: [{body.strip()}]"
            )
            continue
        return TemporalInterval(start, end)
    assert first_error is not None
    raise first_error


def parse_purpose(raw: str) -> str | None:
    match = _PURPOSE.search(raw)
    return match.group(1) if match else None


def synthesize_intent(interval: TemporalInterval, query: Query) -> str:
    return (
        f"inspect [{format_seconds(interval.start_s)},{format_seconds(interval.end_s)}] "
        f"for: {query.text}"
    )


def propose_next_segment(
    state: PlannerState,
    video: VideoDescriptor,
    cfg: BudgetConfig,
    llm: CompletionPort,
) -> SegmentProposal:
    """Ask the LLM for the next segment, reprompting with the failure reason until one validates."""

    prompt = build_rtp_prompt(state, video, cfg)
    user = prompt.user
    rejections: list[Rejection] = []
    reason = "no-attempt"
    for attempt in range(1, cfg.retry_limit + 1):
        reply = llm.complete(prompt.system, user)
        try:
            interval = parse_segment_reply(reply)
        except ParseError as exc:
            reason = exc.reason
        else:
            verdict = validate_interval(interval, video, state.reviewed, cfg)
            if verdict.accepted:
                return SegmentProposal(
                    interval=interval,
                    raw_reply=reply,
                    attempts=attempt,
                    rejections=tuple(rejections),
                )
            assert verdict.reason is not None
            reason = verdict.reason.value
        LOGGER.warning(
            "segment reply rejected (%s), attempt %d/%d", reason, attempt, cfg.retry_limit
        )
        rejections.append(Rejection(reply=reply, reason=reason))
        user = prompt.user + retry_suffix(reason, reply)
    raise RetriesExhaustedError(
        cfg.retry_limit, reason, tuple(r.reply for r in rejections)
    )


def _max_window(video: VideoDescriptor, cfg: BudgetConfig) -> float:
    """Longest window that is neither over the cap nor the whole video."""

    cap = cfg.max_segment_s
    if cap < video.duration_s:
        return cap
    return video.duration_s - min(1.0, video.duration_s / 2.0)


def apply_refinement(
    interval: TemporalInterval,
    delta: RefinementDelta,
    video: VideoDescriptor,
    cfg: BudgetConfig,
) -> TemporalInterval:
    """Move the interval centre to the suggested centre and scale its length.

    The result is clamped into the video, keeping its length where the timeline allows.
    """

    length = min(interval.length, _max_window(video, cfg)) * delta.scale
    start = delta.suggested_center_s - length / 2.0
    end = start + length
    if start < 0.0:
        start, end = 0.0, length
    if end > video.duration_s:
        start, end = video.duration_s - length, video.duration_s
    return TemporalInterval(start, end)


def refinement_applies(state: PlannerState) -> bool:
    delta = state.last_feedback
    if delta is None:
        return False
    if state.reviewed and delta.is_identity_for(state.reviewed[-1]):
        return False
    return delta.suggested_center_s not in state.used_centers


@dataclass(frozen=True)
class PlannedEpisode:
    episode: ReasoningEpisode
    proposal: SegmentProposal
    state: PlannerState


def plan_next_episode(
    state: PlannerState,
    video: VideoDescriptor,
    cfg: BudgetConfig,
    llm: CompletionPort,
    iteration: int,
) -> PlannedEpisode:
    """One planning step: propose, then refine with the previous consistency feedback."""

    proposal = propose_next_segment(state, video, cfg, llm)
    interval = proposal.interval
    origin = EpisodeOrigin.PLANNED
    if refinement_applies(state):
        assert state.last_feedback is not None
        refined = apply_refinement(interval, state.last_feedback, video, cfg)
        if validate_interval(refined, video, (), cfg).accepted:
            LOGGER.debug("refined %s -> %s", interval.render(), refined.render())
            interval = refined
            origin = EpisodeOrigin.REFINED
            state = replace(
                state, used_centers=state.used_centers + (state.last_feedback.suggested_center_s,)
            )
    intent = parse_purpose(proposal.raw_reply) or synthesize_intent(interval, state.query)
    episode = ReasoningEpisode(iteration=iteration, intent=intent, interval=interval, origin=origin)
    return PlannedEpisode(episode=episode, proposal=proposal, state=state)


def fallback_window(
    video: VideoDescriptor,
    reviewed: tuple[TemporalInterval, ...],
    cfg: BudgetConfig,
) -> TemporalInterval | None:
    """Leading cap-length window of the longest unreviewed gap; None when nothing is left."""

    gaps = [g for g in unreviewed_gaps(video, reviewed) if g.length >= MIN_FALLBACK_GAP_S]
    if not gaps:
        return None
    gap = max(gaps, key=lambda g: (g.length, -g.start_s))
    length = min(gap.length, _max_window(video, cfg))
    window = TemporalInterval(gap.start_s, gap.start_s + length)
    if not validate_interval(window, video, reviewed, cfg).accepted:
        return None
    return window


def random_window(
    video: VideoDescriptor,
    reviewed: tuple[TemporalInterval, ...],
    cfg: BudgetConfig,
    rng: np.random.Generator,
) -> TemporalInterval:
    """Cap-length window drawn uniformly over starts whose window fits an unreviewed gap.

    When no gap can hold a full window the start is drawn over the whole timeline.
    """

    length = _max_window(video, cfg)
    latest_start = max(video.duration_s - length, 0.0)
    starts = [
        (g.start_s, g.end_s - length)
        for g in unreviewed_gaps(video, reviewed)
        if g.end_s - length >= g.start_s
    ]
    total = sum(hi - lo for lo, hi in starts)
    if not starts:
        start = float(rng.uniform(0.0, latest_start))
    elif total <= 0.0:
        start = starts[int(rng.integers(len(starts)))][0]
    else:
        offset = float(rng.uniform(0.0, total))
        start = starts[-1][1]
        for lo, hi in starts:
            if offset <= hi - lo:
                start = lo + offset
                break
            offset -= hi - lo
    return TemporalInterval(start, start + length)
