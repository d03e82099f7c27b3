from __future__ import annotations

import sys
from pathlib import Path
from typing import Callable

import pytest

_SRC = (Path(__file__).resolve().parents[1] / "src").as_posix()
if _SRC not in sys.path:
    sys.path.insert(0, _SRC)


KITE_QUESTION = "What lands on the roof?"


@pytest.fixture
def kite_world() -> Callable[..., object]:
    """Factory for a one-video world: a red kite lands on a roof at 400-430 s."""

    from timeline_qa.backends.world import (
        AnswerRule,
        PlannerPolicy,
        ScriptedEvent,
        ScriptedVideo,
        ScriptedWorld,
    )
    from timeline_qa.core.types import TemporalInterval, VideoDescriptor

    def axis(i: int) -> tuple[float, ...]:
        return tuple(1.0 if j == i else 0.0 for j in range(8))

    def build(
        *,
        evidence: tuple[str, ...] = ("red kite",),
        duration_s: float = 600.0,
        policy: str = PlannerPolicy.HEURISTIC,
    ) -> ScriptedWorld:
        video = ScriptedVideo(
            descriptor=VideoDescriptor.from_duration("roof", duration_s),
            events=(
                ScriptedEvent(
                    event_id="kite",
                    interval=TemporalInterval(400.0, 430.0),
                    description="a red kite lands on the roof",
                    embedding=axis(1),
                ),
            ),
            background_embedding=axis(0),
            background_description="an empty roof",
        )
        return ScriptedWorld(
            world_id="kite",
            dimension=8,
            videos=(video,),
            text_embeddings=(("what lands on the roof", axis(1)),),
            answer_rules=(AnswerRule(KITE_QUESTION, "red kite", evidence),),
            planner_policy=policy,
        )

    return build
