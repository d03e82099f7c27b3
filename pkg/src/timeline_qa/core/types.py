from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

Vector = tuple[float, ...]


def freeze_vector(values: Sequence[float] | np.ndarray) -> Vector:
    return tuple(float(v) for v in np.asarray(values, dtype=np.float64).ravel())


def format_seconds(value: float) -> str:
    """Render seconds the way prompts and digests show them: integral values without decimals."""

    rounded = round(float(value), 1)
    if float(rounded).is_integer():
        return str(int(rounded))
    return f"{rounded:.1f}"


@dataclass(frozen=True)
class VideoDescriptor:
    """A video timeline. Frames are addressed by index; no pixel data lives here."""

    id: str
    duration_s: float
    fps: float
    frame_count: int

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("video id must be non-empty")
        if not (math.isfinite(self.duration_s) and self.duration_s > 0):
            raise ValueError(f"duration_s must be > 0, got {self.duration_s}")
        if not (math.isfinite(self.fps) and self.fps > 0):
            raise ValueError(f"fps must be > 0, got {self.fps}")
        if self.frame_count < 1:
            raise ValueError("frame_count must be positive")
        expected = math.floor(self.duration_s * self.fps)
        if abs(self.frame_count - expected) > 1:
            raise ValueError(
                f"frame_count {self.frame_count} inconsistent with duration*fps ({expected})"
            )

    @classmethod
    def from_duration(cls, video_id: str, duration_s: float, fps: float = 1.0) -> VideoDescriptor:
        return cls(
            id=video_id,
            duration_s=float(duration_s),
            fps=float(fps),
            frame_count=max(1, math.floor(duration_s * fps)),
        )

    def frame_index(self, time_s: float) -> int:
        """Half-up rounding of time to a frame index, clamped to the last frame."""

        index = math.floor(time_s * self.fps + 0.5)
        return min(max(index, 0), self.frame_count - 1)

    def frame_time(self, frame_index: int) -> float:
        return frame_index / self.fps

    @property
    def timeline(self) -> TemporalInterval:
        return TemporalInterval(0.0, self.duration_s)


@dataclass(frozen=True)
class TemporalInterval:
    """A closed span [start_s, end_s] in seconds.

    Construction only checks that both ends are finite; ordering and bounds are
    verdicts of `validate_interval`, so malformed proposals can still be described.
    """

    start_s: float
    end_s: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise ValueError(f"interval bounds must be finite: [{self.start_s}, {self.end_s}]")

    @property
    def length(self) -> float:
        return self.end_s - self.start_s

    @property
    def center(self) -> float:
        return (self.start_s + self.end_s) / 2.0

    def intersection_length(self, other: TemporalInterval) -> float:
        return max(0.0, min(self.end_s, other.end_s) - max(self.start_s, other.start_s))

    def union(self, other: TemporalInterval) -> TemporalInterval:
        return TemporalInterval(min(self.start_s, other.start_s), max(self.end_s, other.end_s))

    def within(self, lower: float, upper: float) -> bool:
        return lower <= self.start_s and self.end_s <= upper

    def render(self) -> str:
        return f"[{format_seconds(self.start_s)}, {format_seconds(self.end_s)}]"


@dataclass(frozen=True)
class QueryOption:
    label: str
    text: str


@dataclass(frozen=True)
class Query:
    text: str
    video: VideoDescriptor
    options: tuple[QueryOption, ...] | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("query text must be non-empty")
        if self.options:
            labels = [o.label for o in self.options]
            if len(set(labels)) != len(labels):
                raise ValueError(f"option labels must be unique: {labels}")

    def formatted(self) -> str:
        if not self.options:
            return self.text
        rendered = " ".join(f"{o.label}. {o.text}" for o in self.options)
        return f"{self.text} Options: {rendered}"


class EpisodeOrigin(str, Enum):
    PLANNED = "planned"
    REFINED = "refined"
    RANDOM_ABLATION = "random-ablation"
    FALLBACK = "fallback"


@dataclass(frozen=True)
class ReasoningEpisode:
    iteration: int
    intent: str
    interval: TemporalInterval
    origin: EpisodeOrigin

    def __post_init__(self) -> None:
        if self.iteration < 1:
            raise ValueError("iteration must be positive")


class ConfidenceBand(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"

    @property
    def rank(self) -> int:
        return _BAND_RANK[self]


_BAND_RANK = {ConfidenceBand.LOW: 0, ConfidenceBand.MEDIUM: 1, ConfidenceBand.HIGH: 2}


def band_for_score(score: int) -> ConfidenceBand:
    if 90 <= score <= 100:
        return ConfidenceBand.HIGH
    if 40 <= score <= 89:
        return ConfidenceBand.MEDIUM
    if 1 <= score <= 39:
        return ConfidenceBand.LOW
    raise ValueError(f"confidence score out of range 1-100: {score}")


@dataclass(frozen=True)
class Confidence:
    score: int
    band: ConfidenceBand

    def __post_init__(self) -> None:
        if band_for_score(self.score) is not self.band:
            raise ValueError(f"band {self.band.value} does not match score {self.score}")


@dataclass(frozen=True)
class AgentAnswer:
    answer: str
    reason: str
    summary: str
    confidence: Confidence


@dataclass(frozen=True)
class BudgetConfig:
    max_iterations: int = 12
    max_segment_s: float = 180.0
    max_total_frames: int = 384
    retry_limit: int = 3

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if not self.max_segment_s > 0:
            raise ValueError("max_segment_s must be positive")
        if self.max_total_frames < 1:
            raise ValueError("max_total_frames must be positive")
        if self.retry_limit < 1:
            raise ValueError("retry_limit must be positive")


class RejectReason(str, Enum):
    INVERTED = "inverted"
    TOO_LONG = "too-long"
    OUT_OF_RANGE = "out-of-range"
    WHOLE_VIDEO = "whole-video"
    ALREADY_REVIEWED = "already-reviewed"


@dataclass(frozen=True)
class ValidationVerdict:
    accepted: bool
    reason: RejectReason | None = None

    def describe(self) -> str:
        if self.accepted or self.reason is None:
            return "accepted"
        return f"rejected: {self.reason.value}"


@dataclass(frozen=True)
class PromptPair:
    system: str
    user: str
