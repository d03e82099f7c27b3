from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from timeline_qa.backends.ports import VisionPort
from timeline_qa.core.codec import register
from timeline_qa.core.types import ReasoningEpisode, Vector, VideoDescriptor, freeze_vector
from timeline_qa.errors import DimensionMismatchError, PortError
from timeline_qa.perception.projection import (
    AggregationMode,
    Projector,
    aggregate_segment,
    project_tokens,
)
from timeline_qa.perception.sampling import (
    select_frames,
    semantic_variance,
    should_reselect,
    variance_density,
)

LOGGER = logging.getLogger(__name__)


@register
@dataclass(frozen=True)
class FrameSample:
    frame_index: int
    time_s: float
    embedding: Vector


@register
@dataclass(frozen=True)
class Evidence:
    """Grounded frames for one episode.

    ``embedded`` lists the vision calls this episode made, in issue order; ``samples`` is the
    final sample set. Frames embedded by earlier episodes come from the session cache and are
    not charged again, so ``frame_cost == len(embedded)``.
    """

    episode: ReasoningEpisode
    samples: tuple[FrameSample, ...]
    embedded: tuple[FrameSample, ...]
    projected: tuple[Vector, ...]
    aggregate: Vector
    centroid: Vector
    frame_cost: int
    reselected: bool
    description: str

    def __post_init__(self) -> None:
        if self.frame_cost != len(self.embedded):
            raise ValueError("frame_cost must equal the number of embedded frames")
        if len(self.projected) != len(self.samples):
            raise ValueError("one projected token per sample")


class FrameCache:
    """Session-scoped embeddings by frame index."""

    def __init__(self, dimension: int | None = None) -> None:
        self._vectors: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()
        self.dimension = dimension

    def __contains__(self, index: int) -> bool:
        with self._lock:
            return index in self._vectors

    def __len__(self) -> int:
        with self._lock:
            return len(self._vectors)

    def get(self, index: int) -> np.ndarray:
        with self._lock:
            return self._vectors[index]

    def put(self, index: int, vector: np.ndarray) -> None:
        with self._lock:
            if self.dimension is None:
                self.dimension = int(vector.size)
            elif vector.size != self.dimension:
                raise DimensionMismatchError(
                    f"frame embedding dimension {vector.size} != session dimension {self.dimension}"
                )
            self._vectors[index] = vector


def _embed_missing(
    times: Sequence[float],
    video: VideoDescriptor,
    vision: VisionPort,
    cache: FrameCache,
    workers: int,
) -> list[FrameSample]:
    missing: list[int] = []
    for t in times:
        index = video.frame_index(t)
        if index not in cache and index not in missing:
            missing.append(index)
    if not missing:
        return []

    def call(index: int) -> np.ndarray:
        return np.asarray(vision.embed(video.id, video.frame_time(index)), dtype=np.float64)

    if workers > 1 and len(missing) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            vectors = list(pool.map(call, missing))
    else:
        vectors = [call(i) for i in missing]

    issued = []
    for index, vector in zip(missing, vectors):
        cache.put(index, vector)
        issued.append(FrameSample(index, video.frame_time(index), freeze_vector(vector)))
    return issued


def _samples(
    times: Sequence[float], video: VideoDescriptor, cache: FrameCache
) -> list[FrameSample]:
    out = []
    for t in times:
        index = video.frame_index(t)
        out.append(FrameSample(index, float(t), freeze_vector(cache.get(index))))
    return out


def ground_segment(
    episode: ReasoningEpisode,
    video: VideoDescriptor,
    vision: VisionPort,
    proj: Projector,
    budget_k: int,
    *,
    aggregation: AggregationMode = AggregationMode.MEAN,
    cache: FrameCache | None = None,
    frame_allowance: int | None = None,
    workers: int = 1,
) -> Evidence:
    """Uniform first pass, at most one variance-driven reselection, then project and aggregate."""

    cache = cache if cache is not None else FrameCache()
    interval = episode.interval
    try:
        first_times = select_frames(interval, video, None, budget_k)
        embedded = _embed_missing(first_times, video, vision, cache, workers)
        samples = _samples(first_times, video, cache)
        reselected = False

        if len(samples) >= 2:
            variances = semantic_variance([s.embedding for s in samples])
            if should_reselect(variances):
                density = variance_density(interval, [s.time_s for s in samples], variances)
                second_times = select_frames(interval, video, density, budget_k)
                new_frames = {
                    i for i in (video.frame_index(t) for t in second_times) if i not in cache
                }
                remaining = None if frame_allowance is None else frame_allowance - len(embedded)
                if remaining is not None and len(new_frames) > remaining:
                    LOGGER.debug(
                        "iteration %d: reselection skipped, %d new frames exceed allowance %d",
                        episode.iteration,
                        len(new_frames),
                        remaining,
                    )
                else:
                    embedded += _embed_missing(second_times, video, vision, cache, workers)
                    samples = _samples(second_times, video, cache)
                    reselected = True

        description = vision.describe(video.id, interval)
    except PortError as exc:
        exc.add_note(f"while grounding iteration {episode.iteration} {interval.render()}")
        raise

    raw = np.array([s.embedding for s in samples], dtype=np.float64)
    tokens = project_tokens(raw, proj)
    aggregate = aggregate_segment(tokens, aggregation)
    return Evidence(
        episode=episode,
        samples=tuple(samples),
        embedded=tuple(embedded),
        projected=tuple(freeze_vector(t) for t in tokens),
        aggregate=freeze_vector(aggregate),
        centroid=freeze_vector(raw.mean(axis=0)),
        frame_cost=len(embedded),
        reselected=reselected,
        description=description,
    )
