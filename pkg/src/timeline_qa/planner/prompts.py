from __future__ import annotations

import math
from functools import lru_cache
from pathlib import Path
from typing import Iterable

from timeline_qa.core.types import PromptPair, TemporalInterval, VideoDescriptor, format_seconds

TEMPLATE_DIR = Path(__file__).resolve().parents[1] / "templates"

RTP_SYSTEM_TEMPLATE = "rtp_system.txt"
RTP_USER_TEMPLATE = "rtp_user.txt"

IRRELEVANT_TAG = " (irrelevant)"


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    text = (TEMPLATE_DIR / name).read_text(encoding="utf-8")
    return text.rstrip("\n")


def _whole_seconds(value: float) -> int:
    return int(math.floor(value + 0.5))


def render_reviewed_list(
    reviewed: Iterable[TemporalInterval],
    irrelevant: Iterable[TemporalInterval] = (),
) -> str:
    """Render reviewed segments as integer "[s, e]" pairs, "None" when nothing was reviewed."""

    flagged = set(irrelevant)
    parts = []
    for interval in reviewed:
        text = f"[{_whole_seconds(interval.start_s)}, {_whole_seconds(interval.end_s)}]"
        if interval in flagged:
            text += IRRELEVANT_TAG
        parts.append(text)
    return ", ".join(parts) if parts else "None"


def build_rtp_prompt_text(
    *,
    question: str,
    video: VideoDescriptor,
    max_segment_s: float,
    reviewed: Iterable[TemporalInterval],
    irrelevant: Iterable[TemporalInterval] = (),
    memory_digest: str = "",
) -> PromptPair:
    history_block = f"\n\nHistory record:\n{memory_digest}" if memory_digest else ""
    system = load_template(RTP_SYSTEM_TEMPLATE).format(
        reviewed_list=render_reviewed_list(reviewed, irrelevant),
        history_block=history_block,
    )
    user = load_template(RTP_USER_TEMPLATE).format(
        question=question,
        duration=format_seconds(video.duration_s),
        max_segment=format_seconds(max_segment_s),
    )
    return PromptPair(system=system, user=user)


def retry_suffix(reason: str, reply: str) -> str:
    snippet = " ".join(reply.split())
    if len(snippet) > 120:
        snippet = snippet[:117] + "..."
    return (
        f"\n\nYour previous reply was rejected ({reason}): {snippet}\n"
        "Return ONLY a valid JSON array [start_time, end_time] that satisfies every constraint."
    )
