from __future__ import annotations

from timeline_qa.core.codec import decode, encode, register
from timeline_qa.core.types import (
    AgentAnswer,
    BudgetConfig,
    Confidence,
    ConfidenceBand,
    EpisodeOrigin,
    PromptPair,
    Query,
    QueryOption,
    ReasoningEpisode,
    RejectReason,
    TemporalInterval,
    ValidationVerdict,
    VideoDescriptor,
)
from timeline_qa.core.validation import confidence_from_score, validate_interval

__all__ = [
    "AgentAnswer",
    "BudgetConfig",
    "Confidence",
    "ConfidenceBand",
    "EpisodeOrigin",
    "PromptPair",
    "Query",
    "QueryOption",
    "ReasoningEpisode",
    "RejectReason",
    "TemporalInterval",
    "ValidationVerdict",
    "VideoDescriptor",
    "confidence_from_score",
    "decode",
    "encode",
    "register",
    "validate_interval",
]
