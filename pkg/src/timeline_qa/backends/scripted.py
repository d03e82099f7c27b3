"""Deterministic LLM and vision ports driven by a scripted world.

The scripted LLM recognises which prompt it is answering from the system text: segment
proposals get the world's planner policy, answering prompts get the world's answer rules.
Identical inputs always produce identical outputs.
"""

from __future__ import annotations

import hashlib
import math
import re
import threading
from typing import Any, Mapping, Sequence

import numpy as np

from timeline_qa.backends.ports import LLMPort, Ports, VisionPort
from timeline_qa.backends.world import (
    PlannerPolicy,
    ScriptedVideo,
    ScriptedWorld,
    scripted_embed,
    visible_descriptions,
)
from timeline_qa.core.types import PromptPair, TemporalInterval, format_seconds
from timeline_qa.core.validation import OVERLAP_TOLERANCE_S, unreviewed_gaps

RTP_MARKER = "You are an intelligent video analyst."
ANSWER_MARKER = "You are an expert video analyst."

HIGH_SCORE = 95
PARTIAL_SCORE = 60
MISS_SCORE = 20

_QUESTION = re.compile(r'^- Question: "(.*)"\s*$', re.MULTILINE)
_DURATION = re.compile(r"Total Video Duration: ([0-9.]+) seconds")
_CAP = re.compile(r"must NOT exceed ([0-9.]+) seconds")
_REVIEWED = re.compile(r"\[(-?[0-9.]+), (-?[0-9.]+)\]")
_CLIP = re.compile(r"^- Video Clip: (.*)$", re.MULTILINE)
_HISTORY = re.compile(r"^- History Record:\n(.*?)\n\nTask:", re.MULTILINE | re.DOTALL)

_PURE_POLICIES = (
    PlannerPolicy.HEURISTIC,
    PlannerPolicy.WHOLE_VIDEO,
    PlannerPolicy.GARBAGE,
    PlannerPolicy.OVERLONG,
    PlannerPolicy.INVERTED,
    PlannerPolicy.REPEAT_REVIEWED,
    PlannerPolicy.RANDOM,
)


def _prompt_seed(prompt: PromptPair) -> int:
    digest = hashlib.sha256((prompt.system + "\x00" + prompt.user).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _reply(start: float, end: float) -> str:
    return f"[{format_seconds(start)}, {format_seconds(end)}]"


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def _covered(interval: TemporalInterval, reviewed: Sequence[TemporalInterval]) -> float:
    gaps = [g for g in unreviewed_gaps_within(interval, reviewed)]
    return interval.length - sum(g.length for g in gaps)


def unreviewed_gaps_within(
    interval: TemporalInterval, reviewed: Sequence[TemporalInterval]
) -> list[TemporalInterval]:
    cursor = interval.start_s
    gaps = []
    for r in sorted(reviewed, key=lambda r: r.start_s):
        if r.end_s <= cursor or r.start_s >= interval.end_s:
            continue
        if r.start_s > cursor:
            gaps.append(TemporalInterval(cursor, r.start_s))
        cursor = max(cursor, r.end_s)
    if cursor < interval.end_s:
        gaps.append(TemporalInterval(cursor, interval.end_s))
    return gaps


def _max_window(duration: float, cap: float) -> float:
    return cap if cap < duration else duration - min(1.0, duration / 2.0)


class _RtpRequest:
    def __init__(self, prompt: PromptPair) -> None:
        q = _QUESTION.search(prompt.user)
        d = _DURATION.search(prompt.user)
        c = _CAP.search(prompt.user)
        self.question = q.group(1) if q else ""
        self.duration = float(d.group(1)) if d else 0.0
        self.cap = float(c.group(1)) if c else 180.0
        reviewed_line = prompt.system.split("\n\nHistory record:", 1)[0]
        self.reviewed = [
            TemporalInterval(float(s), float(e))
            for s, e in _REVIEWED.findall(reviewed_line)
            if float(e) > float(s)
        ]


def _pick_video(world: ScriptedWorld, request: _RtpRequest, keyword: np.ndarray) -> ScriptedVideo:
    candidates = [
        v for v in world.videos if abs(v.descriptor.duration_s - request.duration) < 0.5
    ] or list(world.videos)

    def best_match(v: ScriptedVideo) -> float:
        return max((_cosine(keyword, np.asarray(e.embedding)) for e in v.events), default=-1.0)

    return max(candidates, key=lambda v: (best_match(v), -candidates.index(v)))


def heuristic_window(
    video: ScriptedVideo,
    keyword: np.ndarray,
    reviewed: Sequence[TemporalInterval],
    cap: float,
) -> TemporalInterval | None:
    """Cap window centred on the best-matching event that is not yet reviewed.

    The window is kept inside the unreviewed gap holding most of that event. With every event
    reviewed, the leading window of the largest unreviewed gap is returned instead.
    """

    duration = video.descriptor.duration_s
    length_cap = _max_window(duration, cap)
    open_events = [
        e
        for e in video.events
        if e.interval.length - _covered(e.interval, reviewed) > OVERLAP_TOLERANCE_S
    ]
    gaps = [g for g in unreviewed_gaps(video.descriptor, reviewed) if g.length >= 1.0]
    if not gaps:
        return None
    if not open_events:
        gap = max(gaps, key=lambda g: (g.length, -g.start_s))
        return TemporalInterval(gap.start_s, gap.start_s + min(gap.length, length_cap))

    target = min(
        open_events,
        key=lambda e: (-_cosine(keyword, np.asarray(e.embedding)), e.interval.start_s),
    )
    gap = max(
        gaps,
        key=lambda g: (g.intersection_length(target.interval), -g.start_s),
    )
    length = min(length_cap, gap.length)
    half = length / 2.0
    center = min(max(target.interval.center, gap.start_s + half), gap.end_s - half)
    return TemporalInterval(center - half, center + half)


def scripted_planner_policy(world: ScriptedWorld, prompt: PromptPair) -> str:
    """Segment reply for a proposal prompt under the world's planner policy."""

    request = _RtpRequest(prompt)
    policy = world.planner_policy
    rng = np.random.default_rng(_prompt_seed(prompt))
    if policy == PlannerPolicy.MIXED:
        policy = _PURE_POLICIES[int(rng.integers(len(_PURE_POLICIES)))]
    duration, cap = request.duration, request.cap

    if policy == PlannerPolicy.WHOLE_VIDEO:
        return _reply(0.0, duration)
    if policy == PlannerPolicy.GARBAGE:
        return "I would look somewhere around the middle of the video."
    if policy == PlannerPolicy.OVERLONG:
        start = min(10.0, duration / 10.0)
        return _reply(start, start + cap + 60.0)
    if policy == PlannerPolicy.INVERTED:
        return _reply(min(150.0, duration * 0.9), min(10.0, duration * 0.1))
    if policy == PlannerPolicy.RANDOM:
        a, b = rng.uniform(-0.2 * duration, 1.2 * duration, size=2)
        return f"Looking at this: [{a:.1f}, {b:.1f}]"
    if policy == PlannerPolicy.REPEAT_REVIEWED and request.reviewed:
        first = request.reviewed[0]
        return _reply(first.start_s, first.end_s)

    keyword = world.text_embedding(request.question)
    video = _pick_video(world, request, keyword)
    window = heuristic_window(video, keyword, request.reviewed, cap)
    if window is None:
        return "Every part of the video has already been reviewed."
    return _reply(window.start_s, window.end_s)


def scripted_answer_policy(world: ScriptedWorld, prompt: PromptPair) -> str:
    """Answer-agent reply from the world's answer rules and the text the prompt shows."""

    q = _QUESTION.search(prompt.user)
    clip_match = _CLIP.search(prompt.user)
    history_match = _HISTORY.search(prompt.user)
    question = q.group(1) if q else ""
    clip = clip_match.group(1).strip() if clip_match else ""
    history = history_match.group(1) if history_match else ""
    context = f"{clip}\n{history}".lower()

    rule = world.rule_for(question)
    if rule is None:
        answer, reason, score = "unknown", "No rule covers this question.", MISS_SCORE
    else:
        present = [p for p in rule.evidence if p.lower() in context]
        if rule.evidence and len(present) == len(rule.evidence):
            answer, score = rule.answer, HIGH_SCORE
            if len(rule.evidence) >= 2:
                reason = f"{rule.evidence[-1]} because {rule.evidence[0]}."
            else:
                reason = f"The clip shows {rule.evidence[0]}."
        elif present:
            answer, score = rule.partial_answer, PARTIAL_SCORE
            reason = f"The clip shows {present[0]} but the rest of the answer is not visible."
        else:
            answer, score = "unknown", MISS_SCORE
            reason = "Nothing in the clip relates to the question."
    return (
        f"Answer: {answer}\n"
        f"Reason: {reason}\n"
        f"Summary of this content: {clip}\n"
        f"Confidence Score: {score}"
    )


class ScriptedLLM(LLMPort):
    def __init__(self, world: ScriptedWorld) -> None:
        self.world = world

    def complete(self, system: str, user: str) -> str:
        prompt = PromptPair(system=system, user=user)
        if system.startswith(RTP_MARKER):
            return scripted_planner_policy(self.world, prompt)
        if system.startswith(ANSWER_MARKER):
            return scripted_answer_policy(self.world, prompt)
        return ""

    def embed_text(self, text: str) -> list[float]:
        return self.world.text_embedding(text).tolist()


class ScriptedVision(VisionPort):
    def __init__(self, world: ScriptedWorld) -> None:
        self.world = world

    def embed(self, video_id: str, time_s: float) -> list[float]:
        return scripted_embed(self.world, video_id, time_s).tolist()

    def describe(self, video_id: str, interval: TemporalInterval) -> str:
        video = self.world.video(video_id)
        seen = visible_descriptions(video, interval)
        return "; ".join(seen) if seen else video.background_description


def scripted_ports(world: ScriptedWorld) -> Ports:
    return Ports(llm=ScriptedLLM(world), vision=ScriptedVision(world))


class PatternLLM(LLMPort):
    """LLM stub replying by substring match on the prompt.

    A pattern may map to a single reply or to a list consumed in order (the last one repeats).
    Every call is kept in ``call_history``.
    """

    def __init__(
        self,
        responses: Mapping[str, str | Sequence[str]] | None = None,
        *,
        default: str = "",
        embeddings: Mapping[str, Sequence[float]] | None = None,
        dimension: int = 8,
    ) -> None:
        self.responses = dict(responses or {})
        self.default = default
        self.embeddings = dict(embeddings or {})
        self.dimension = dimension
        self.call_history: list[dict[str, Any]] = []
        self._served: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, system: str, user: str) -> str:
        with self._lock:
            self.call_history.append({"system": system, "user": user})
            prompt = system + "\n" + user
            for pattern, reply in self.responses.items():
                if pattern in prompt:
                    if isinstance(reply, str):
                        return reply
                    n = self._served.get(pattern, 0)
                    self._served[pattern] = n + 1
                    return reply[min(n, len(reply) - 1)]
            return self.default

    def embed_text(self, text: str) -> list[float]:
        for key, vector in self.embeddings.items():
            if key in text:
                return [float(v) for v in vector]
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        v = rng.standard_normal(self.dimension)
        return (v / math.sqrt(float(np.dot(v, v)))).tolist()

    def reset(self) -> None:
        self.call_history = []
        self._served = {}
