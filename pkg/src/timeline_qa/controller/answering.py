"""Answer-agent prompt and reply parsing."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from timeline_qa.core.codec import register
from timeline_qa.core.types import AgentAnswer, Confidence, ConfidenceBand, PromptPair, Query
from timeline_qa.core.validation import confidence_from_score
from timeline_qa.errors import ParseError
from timeline_qa.perception.grounding import Evidence
from timeline_qa.planner.prompts import load_template
from timeline_qa.planner.rtp import CompletionPort

LOGGER = logging.getLogger(__name__)

ANSWER_SYSTEM_TEMPLATE = "answer_system.txt"
ANSWER_USER_TEMPLATE = "answer_user.txt"

# Label as printed in the Output Format block, and the field name used in errors.
_FIELDS = (
    ("Answer", "answer"),
    ("Reason", "reason"),
    ("Summary of this content", "summary"),
    ("Confidence Score", "confidence"),
)


def _label_pattern(label: str) -> re.Pattern[str]:
    return re.compile(
        rf"^[ \t>*_#-]*{re.escape(label)}[ \t*_]*:[ \t*_]*(.*?)[ \t*_]*$",
        re.IGNORECASE | re.MULTILINE,
    )


_PATTERNS = {name: _label_pattern(label) for label, name in _FIELDS}
_SCORE = re.compile(r"^[-+]?\d+(?:\.\d+)?")


def build_answer_prompt(query: Query, memory_digest: str, latest_clip: Evidence) -> PromptPair:
    history_block = f"- History Record:\n{memory_digest}\n" if memory_digest else ""
    user = load_template(ANSWER_USER_TEMPLATE).format(
        question=query.formatted(),
        clip=latest_clip.description,
        history_block=history_block,
    )
    return PromptPair(system=load_template(ANSWER_SYSTEM_TEMPLATE), user=user)


def parse_agent_answer(raw: str) -> AgentAnswer:
    """Extract the four labelled lines of an answer reply; prose around them is ignored."""

    values: dict[str, str] = {}
    for label, name in _FIELDS:
        match = _PATTERNS[name].search(raw)
        if match is None or not match.group(1).strip():
            raise ParseError("missing-field", f"reply has no '{label}:' line", field=name)
        values[name] = match.group(1).strip()

    score_match = _SCORE.match(values["confidence"])
    if score_match is None:
        raise ParseError(
            "invalid-score",
            f"confidence is not a number: {values['confidence']!r}",
            field="confidence",
        )
    confidence = confidence_from_score(float(score_match.group(0)))
    return AgentAnswer(
        answer=values["answer"],
        reason=values["reason"],
        summary=values["summary"],
        confidence=confidence,
    )


def parse_retry_suffix(error: ParseError) -> str:
    return (
        f"\n\nYour previous reply could not be used ({error.reason}: {error}). "
        "Reply again following the Output Format EXACTLY."
    )


@register
@dataclass(frozen=True)
class AnswerAttempt:
    reply: str
    error: str | None = None


@register
@dataclass(frozen=True)
class AnswerOutcome:
    answer: AgentAnswer
    attempts: tuple[AnswerAttempt, ...]
    synthesized: bool = False


def unparsed_answer(evidence: Evidence, last_error: str) -> AgentAnswer:
    """Lowest-confidence stand-in recorded when every reply failed to parse."""

    return AgentAnswer(
        answer="unknown",
        reason=f"no parseable reply ({last_error})",
        summary=evidence.description,
        confidence=Confidence(score=1, band=ConfidenceBand.LOW),
    )


def ask_answer_agent(
    prompt: PromptPair,
    evidence: Evidence,
    llm: CompletionPort,
    retry_limit: int,
) -> AnswerOutcome:
    user = prompt.user
    attempts: list[AnswerAttempt] = []
    last_error = "no-attempt"
    for attempt in range(1, retry_limit + 1):
        reply = llm.complete(prompt.system, user)
        try:
            answer = parse_agent_answer(reply)
        except ParseError as exc:
            last_error = exc.reason
            attempts.append(AnswerAttempt(reply=reply, error=f"{exc.reason}: {exc}"))
            LOGGER.warning(
                "answer reply rejected (%s), attempt %d/%d", exc.reason, attempt, retry_limit
            )
            user = prompt.user + parse_retry_suffix(exc)
            continue
        attempts.append(AnswerAttempt(reply=reply))
        return AnswerOutcome(answer=answer, attempts=tuple(attempts))
    return AnswerOutcome(
        answer=unparsed_answer(evidence, last_error),
        attempts=tuple(attempts),
        synthesized=True,
    )
