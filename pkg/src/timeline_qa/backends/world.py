"""Scripted worlds: synthetic videos made of timed events with embeddings.

A world is loaded from one JSON document (see ``schemas/worlds/scripted_world_v1.schema.json``)
and is immutable afterwards; the per-frame noise cache is the only internal state.
"""

from __future__ import annotations

import hashlib
import threading
import zlib
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from timeline_qa.core.types import TemporalInterval, Vector, VideoDescriptor, freeze_vector
from timeline_qa.errors import UnknownVideoError

DEFAULT_NOISE = 1e-3

# A brief event filling less of the clip than this shows only its glimpse text.
GLIMPSE_COVERAGE = 0.25


class PlannerPolicy:
    HEURISTIC = "heuristic"
    WHOLE_VIDEO = "whole-video"
    GARBAGE = "garbage"
    OVERLONG = "overlong"
    INVERTED = "inverted"
    REPEAT_REVIEWED = "repeat-reviewed"
    RANDOM = "random"
    MIXED = "mixed"

    ALL = (HEURISTIC, WHOLE_VIDEO, GARBAGE, OVERLONG, INVERTED, REPEAT_REVIEWED, RANDOM, MIXED)


@dataclass(frozen=True)
class ScriptedEvent:
    event_id: str
    interval: TemporalInterval
    description: str
    embedding: Vector
    glimpse: str | None = None


@dataclass(frozen=True)
class ScriptedVideo:
    descriptor: VideoDescriptor
    events: tuple[ScriptedEvent, ...]
    background_embedding: Vector
    background_description: str = "nothing notable happens"

    def events_at(self, time_s: float) -> list[ScriptedEvent]:
        return [e for e in self.events if e.interval.start_s <= time_s <= e.interval.end_s]


@dataclass(frozen=True)
class AnswerRule:
    question: str
    answer: str
    evidence: tuple[str, ...]
    partial_answer: str = "uncertain"


@dataclass
class ScriptedWorld:
    world_id: str
    dimension: int
    videos: tuple[ScriptedVideo, ...]
    text_embeddings: tuple[tuple[str, Vector], ...] = ()
    answer_rules: tuple[AnswerRule, ...] = ()
    planner_policy: str = PlannerPolicy.HEURISTIC
    seed: int = 0
    noise: float = DEFAULT_NOISE
    _noise_cache: dict[tuple[str, int], np.ndarray] = field(
        default_factory=dict, repr=False, compare=False
    )
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def video(self, video_id: str) -> ScriptedVideo:
        for v in self.videos:
            if v.descriptor.id == video_id:
                return v
        raise UnknownVideoError(video_id)

    def descriptor(self, video_id: str) -> VideoDescriptor:
        return self.video(video_id).descriptor

    def frame_noise(self, video_id: str, frame_index: int) -> np.ndarray:
        key = (video_id, frame_index)
        with self._lock:
            cached = self._noise_cache.get(key)
        if cached is not None:
            return cached
        rng = np.random.default_rng([self.seed, zlib.crc32(video_id.encode("utf-8")), frame_index])
        direction = rng.standard_normal(self.dimension)
        norm = float(np.linalg.norm(direction))
        vector = direction * (self.noise / norm) if norm > 0 else np.zeros(self.dimension)
        with self._lock:
            self._noise_cache[key] = vector
        return vector

    def text_embedding(self, text: str) -> np.ndarray:
        """Registered embedding of the longest registered text contained in ``text``.

        Unregistered text maps to a deterministic hash-seeded unit vector.
        """

        lowered = text.lower()
        best: tuple[int, Vector] | None = None
        for registered, vector in self.text_embeddings:
            if registered.lower() in lowered and (best is None or len(registered) > best[0]):
                best = (len(registered), vector)
        if best is not None:
            return np.asarray(best[1], dtype=np.float64)
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        v = rng.standard_normal(self.dimension)
        return v / np.linalg.norm(v)

    def rule_for(self, question: str) -> AnswerRule | None:
        matches = [r for r in self.answer_rules if question.startswith(r.question)]
        if not matches:
            return None
        return max(matches, key=lambda r: len(r.question))

    def stretched(self, duration_s: float) -> ScriptedWorld:
        """Clone with every video rescaled to ``duration_s``.

        Events keep their proportional positions.
        """

        videos = []
        for v in self.videos:
            factor = duration_s / v.descriptor.duration_s
            descriptor = VideoDescriptor.from_duration(
                v.descriptor.id, duration_s, v.descriptor.fps
            )
            events = tuple(
                ScriptedEvent(
                    event_id=e.event_id,
                    interval=TemporalInterval(
                        e.interval.start_s * factor, e.interval.end_s * factor
                    ),
                    description=e.description,
                    embedding=e.embedding,
                    glimpse=e.glimpse,
                )
                for e in v.events
            )
            videos.append(
                ScriptedVideo(descriptor, events, v.background_embedding, v.background_description)
            )
        return ScriptedWorld(
            world_id=f"{self.world_id}@{int(duration_s)}s",
            dimension=self.dimension,
            videos=tuple(videos),
            text_embeddings=self.text_embeddings,
            answer_rules=self.answer_rules,
            planner_policy=self.planner_policy,
            seed=self.seed,
            noise=self.noise,
        )

    def with_policy(self, policy: str) -> ScriptedWorld:
        if policy not in PlannerPolicy.ALL:
            raise ValueError(f"unknown planner policy: {policy}")
        return ScriptedWorld(
            world_id=self.world_id,
            dimension=self.dimension,
            videos=self.videos,
            text_embeddings=self.text_embeddings,
            answer_rules=self.answer_rules,
            planner_policy=policy,
            seed=self.seed,
            noise=self.noise,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "world_id": self.world_id,
            "dimension": self.dimension,
            "seed": self.seed,
            "noise": self.noise,
            "planner_policy": self.planner_policy,
            "videos": [
                {
                    "descriptor": {
                        "id": v.descriptor.id,
                        "duration_s": v.descriptor.duration_s,
                        "fps": v.descriptor.fps,
                        "frame_count": v.descriptor.frame_count,
                    },
                    "background_embedding": list(v.background_embedding),
                    "background_description": v.background_description,
                    "events": [
                        {
                            "event_id": e.event_id,
                            "interval": [e.interval.start_s, e.interval.end_s],
                            "description": e.description,
                            "embedding": list(e.embedding),
                            **({"glimpse": e.glimpse} if e.glimpse is not None else {}),
                        }
                        for e in v.events
                    ],
                }
                for v in self.videos
            ],
            "text_embeddings": [
                {"text": text, "embedding": list(vector)} for text, vector in self.text_embeddings
            ],
            "answer_rules": [
                {
                    "question": r.question,
                    "answer": r.answer,
                    "evidence": list(r.evidence),
                    "partial_answer": r.partial_answer,
                }
                for r in self.answer_rules
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ScriptedWorld:
        videos = []
        for v in data["videos"]:
            d = v["descriptor"]
            descriptor = VideoDescriptor(
                id=d["id"],
                duration_s=float(d["duration_s"]),
                fps=float(d["fps"]),
                frame_count=int(d["frame_count"]),
            )
            events = tuple(
                ScriptedEvent(
                    event_id=e["event_id"],
                    interval=TemporalInterval(float(e["interval"][0]), float(e["interval"][1])),
                    description=e["description"],
                    embedding=freeze_vector(e["embedding"]),
                    glimpse=e.get("glimpse"),
                )
                for e in v.get("events", [])
            )
            videos.append(
                ScriptedVideo(
                    descriptor=descriptor,
                    events=events,
                    background_embedding=freeze_vector(v["background_embedding"]),
                    background_description=v.get(
                        "background_description", "nothing notable happens"
                    ),
                )
            )
        return cls(
            world_id=data["world_id"],
            dimension=int(data["dimension"]),
            videos=tuple(videos),
            text_embeddings=tuple(
                (t["text"], freeze_vector(t["embedding"])) for t in data.get("text_embeddings", [])
            ),
            answer_rules=tuple(
                AnswerRule(
                    question=r["question"],
                    answer=r["answer"],
                    evidence=tuple(r["evidence"]),
                    partial_answer=r.get("partial_answer", "uncertain"),
                )
                for r in data.get("answer_rules", [])
            ),
            planner_policy=data.get("planner_policy", PlannerPolicy.HEURISTIC),
            seed=int(data.get("seed", 0)),
            noise=float(data.get("noise", DEFAULT_NOISE)),
        )


def scripted_embed(world: ScriptedWorld, video_id: str, time_s: float) -> np.ndarray:
    """Embedding of the event covering ``time_s`` (latest-starting wins), else the background.

    Seeded per-frame noise of norm ``world.noise`` is added.
    """

    video = world.video(video_id)
    covering = video.events_at(time_s)
    if covering:
        # max keeps the last of equal starts, i.e. the later-listed event.
        chosen = max(enumerate(covering), key=lambda item: (item[1].interval.start_s, item[0]))[1]
        base = np.asarray(chosen.embedding, dtype=np.float64)
    else:
        base = np.asarray(video.background_embedding, dtype=np.float64)
    index = video.descriptor.frame_index(time_s)
    return base + world.frame_noise(video_id, index)


def visible_descriptions(video: ScriptedVideo, interval: TemporalInterval) -> list[str]:
    """What a clip shows: full descriptions, or glimpses for brief events seen from afar."""

    out: list[str] = []
    for e in sorted(video.events, key=lambda e: (e.interval.start_s, e.event_id)):
        overlap = e.interval.intersection_length(interval)
        if overlap <= 0:
            continue
        if e.glimpse is not None and overlap / interval.length < GLIMPSE_COVERAGE:
            out.append(e.glimpse)
        else:
            out.append(e.description)
    return out
