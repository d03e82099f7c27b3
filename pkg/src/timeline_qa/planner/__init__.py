from __future__ import annotations

from timeline_qa.planner.prompts import render_reviewed_list
from timeline_qa.planner.rtp import (
    PlannedEpisode,
    PlannerState,
    SegmentProposal,
    apply_refinement,
    build_rtp_prompt,
    fallback_window,
    parse_segment_reply,
    plan_next_episode,
    propose_next_segment,
    random_window,
)

__all__ = [
    "PlannedEpisode",
    "PlannerState",
    "SegmentProposal",
    "apply_refinement",
    "build_rtp_prompt",
    "fallback_window",
    "parse_segment_reply",
    "plan_next_episode",
    "propose_next_segment",
    "random_window",
    "render_reviewed_list",
]
