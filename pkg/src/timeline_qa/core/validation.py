from __future__ import annotations

import math
from typing import Iterable

from timeline_qa.core.types import (
    BudgetConfig,
    Confidence,
    RejectReason,
    TemporalInterval,
    ValidationVerdict,
    VideoDescriptor,
    band_for_score,
)
from timeline_qa.errors import ParseError

# Intersections at or below this many seconds do not count as re-review.
OVERLAP_TOLERANCE_S = 1.0

# Float slack for boundary comparisons (e.g. end == duration computed from frames).
_EPS = 1e-9


def overlaps_reviewed(
    candidate: TemporalInterval,
    reviewed: Iterable[TemporalInterval],
    *,
    tolerance_s: float = OVERLAP_TOLERANCE_S,
) -> bool:
    return any(candidate.intersection_length(r) > tolerance_s for r in reviewed)


def validate_interval(
    candidate: TemporalInterval,
    video: VideoDescriptor,
    reviewed: Iterable[TemporalInterval],
    cfg: BudgetConfig,
) -> ValidationVerdict:
    """Check a proposed interval against the planner constraints.

    Failures are reported in a fixed order: inverted, out-of-range, whole-video,
    too-long, already-reviewed. The first failing check names the verdict.
    """

    if not candidate.end_s > candidate.start_s:
        return ValidationVerdict(False, RejectReason.INVERTED)
    if candidate.start_s < -_EPS or candidate.end_s > video.duration_s + _EPS:
        return ValidationVerdict(False, RejectReason.OUT_OF_RANGE)
    if candidate.start_s <= _EPS and candidate.end_s >= video.duration_s - _EPS:
        return ValidationVerdict(False, RejectReason.WHOLE_VIDEO)
    if candidate.length > cfg.max_segment_s + _EPS:
        return ValidationVerdict(False, RejectReason.TOO_LONG)
    if overlaps_reviewed(candidate, reviewed):
        return ValidationVerdict(False, RejectReason.ALREADY_REVIEWED)
    return ValidationVerdict(True)


def confidence_from_score(score: int | float) -> Confidence:
    """Map a rubric score to its band. Fractional scores are floored first."""

    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise ParseError("invalid-score", f"confidence score is not numeric: {score!r}")
    if isinstance(score, float):
        if not math.isfinite(score):
            raise ParseError("invalid-score", f"confidence score is not finite: {score!r}")
        score = math.floor(score)
    if not 1 <= score <= 100:
        raise ParseError("invalid-score", f"confidence score out of range 1-100: {score}")
    return Confidence(score=int(score), band=band_for_score(int(score)))


def union_length(intervals: Iterable[TemporalInterval]) -> float:
    """Total covered seconds of a set of intervals (overlaps counted once)."""

    ordered = sorted((i.start_s, i.end_s) for i in intervals if i.end_s > i.start_s)
    total = 0.0
    cur_start: float | None = None
    cur_end = 0.0
    for start, end in ordered:
        if cur_start is None or start > cur_end:
            if cur_start is not None:
                total += cur_end - cur_start
            cur_start, cur_end = start, end
        else:
            cur_end = max(cur_end, end)
    if cur_start is not None:
        total += cur_end - cur_start
    return total


def unreviewed_gaps(
    video: VideoDescriptor, reviewed: Iterable[TemporalInterval]
) -> list[TemporalInterval]:
    """Maximal sub-intervals of the timeline not covered by any reviewed interval."""

    gaps: list[TemporalInterval] = []
    cursor = 0.0
    for start, end in sorted((r.start_s, r.end_s) for r in reviewed):
        if start > cursor:
            gaps.append(TemporalInterval(cursor, min(start, video.duration_s)))
        cursor = max(cursor, end)
        if cursor >= video.duration_s:
            break
    if cursor < video.duration_s:
        gaps.append(TemporalInterval(cursor, video.duration_s))
    return [g for g in gaps if g.length > 0]
