from __future__ import annotations

from timeline_qa.perception.grounding import Evidence, FrameCache, FrameSample, ground_segment
from timeline_qa.perception.projection import (
    AggregationMode,
    Projector,
    aggregate_segment,
    gelu,
    project_tokens,
)
from timeline_qa.perception.sampling import select_frames, semantic_variance

__all__ = [
    "AggregationMode",
    "Evidence",
    "FrameCache",
    "FrameSample",
    "Projector",
    "aggregate_segment",
    "gelu",
    "ground_segment",
    "project_tokens",
    "select_frames",
    "semantic_variance",
]
