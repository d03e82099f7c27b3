from __future__ import annotations

from timeline_qa.controller.answering import build_answer_prompt, parse_agent_answer
from timeline_qa.controller.replay import replay_session
from timeline_qa.controller.session import (
    Ablation,
    SessionConfig,
    SessionResult,
    TerminationReason,
    run_session,
)
from timeline_qa.controller.trace import RecordKind, SessionTrace, TraceRecord

__all__ = [
    "Ablation",
    "RecordKind",
    "SessionConfig",
    "SessionResult",
    "SessionTrace",
    "TerminationReason",
    "TraceRecord",
    "build_answer_prompt",
    "parse_agent_answer",
    "replay_session",
    "run_session",
]
