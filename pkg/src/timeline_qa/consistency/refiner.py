"""Temporal consistency scoring between a reasoning episode and the video timeline.

The episode's intent embedding is compared with per-bin timeline features; the softmax of those
cosine scores is measured against a one-hot target on the bin the planner aimed at. The distance
drives a refinement delta for the next planning step.

Determinism:
- Pure functions over value inputs.
- Ties at argmax resolve to the earliest bin.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from timeline_qa.core.codec import register
from timeline_qa.core.types import TemporalInterval, Vector, VideoDescriptor, freeze_vector
from timeline_qa.errors import BinIndexError, DimensionMismatchError, EmptyInputError
from timeline_qa.errors import UndefinedMeasureError

SQRT2 = math.sqrt(2.0)

MIN_SCALE = 0.25

# Timeline bins per segment cap.
BINS_PER_CAP = 6

PROBES_PER_BIN = 3


@register
@dataclass(frozen=True)
class AlignmentResult:
    scores: Vector
    distribution: Vector
    bin_width_s: float

    @property
    def bin_count(self) -> int:
        return len(self.scores)

    @property
    def argmax_bin(self) -> int:
        # np.argmax returns the first maximal index.
        return int(np.argmax(np.asarray(self.distribution)))


@register
@dataclass(frozen=True)
class RefinementDelta:
    suggested_center_s: float
    scale: float
    loss_contribution: float

    def __post_init__(self) -> None:
        if not MIN_SCALE <= self.scale <= 1.0:
            raise ValueError(f"scale must lie in [{MIN_SCALE}, 1.0], got {self.scale}")
        if self.loss_contribution < 0:
            raise ValueError("loss_contribution must be nonnegative")

    def is_identity_for(self, interval: TemporalInterval) -> bool:
        return self.scale == 1.0 and self.suggested_center_s == interval.center


@register
@dataclass(frozen=True)
class LossGradient:
    """Per-term gradient of the consistency loss with respect to each distribution."""

    gradients: tuple[Vector, ...]
    degenerate: tuple[bool, ...]


def cosine_similarity(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape:
        raise DimensionMismatchError(f"dimension mismatch: {va.shape} vs {vb.shape}")
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise UndefinedMeasureError("cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def stable_softmax(scores: Sequence[float] | np.ndarray) -> np.ndarray:
    x = np.asarray(scores, dtype=np.float64)
    if x.size == 0:
        raise EmptyInputError("softmax of an empty vector")
    shifted = x - np.max(x)
    e = np.exp(shifted)
    return e / np.sum(e)


def alignment_distribution(
    episode_embedding: Sequence[float] | np.ndarray,
    bin_features: Sequence[Sequence[float]] | np.ndarray,
    *,
    bin_width_s: float = 30.0,
) -> AlignmentResult:
    if len(bin_features) == 0:
        raise EmptyInputError("alignment needs at least one timeline bin")
    scores = np.array([cosine_similarity(episode_embedding, f) for f in bin_features])
    return AlignmentResult(
        scores=freeze_vector(scores),
        distribution=freeze_vector(stable_softmax(scores)),
        bin_width_s=float(bin_width_s),
    )


def _one_hot(length: int, index: int) -> np.ndarray:
    if not 0 <= index < length:
        raise BinIndexError(f"bin index {index} out of range for {length} bins")
    target = np.zeros(length, dtype=np.float64)
    target[index] = 1.0
    return target


def loss_term(distribution: Sequence[float] | np.ndarray, planned_bin: int) -> float:
    p = np.asarray(distribution, dtype=np.float64)
    return float(np.linalg.norm(p - _one_hot(p.size, planned_bin)))


def tcr_loss(
    distributions: Sequence[Sequence[float]],
    planned_bins: Sequence[int],
) -> float:
    """Mean Euclidean distance between each distribution and its one-hot planned bin."""

    if len(distributions) != len(planned_bins):
        raise ValueError("distributions and planned_bins must have equal length")
    if not distributions:
        raise EmptyInputError("loss needs at least one term")
    terms = [loss_term(p, b) for p, b in zip(distributions, planned_bins)]
    return float(sum(terms) / len(terms))


def tcr_loss_gradient(
    distributions: Sequence[Sequence[float]],
    planned_bins: Sequence[int],
) -> LossGradient:
    """Analytic dL/dP_t. Terms with zero residual report a zero vector and a degenerate flag."""

    if len(distributions) != len(planned_bins):
        raise ValueError("distributions and planned_bins must have equal length")
    if not distributions:
        raise EmptyInputError("gradient needs at least one term")
    T = len(distributions)
    grads: list[Vector] = []
    flags: list[bool] = []
    for p_raw, b in zip(distributions, planned_bins):
        p = np.asarray(p_raw, dtype=np.float64)
        residual = p - _one_hot(p.size, b)
        norm = float(np.linalg.norm(residual))
        if norm == 0.0:
            grads.append(freeze_vector(np.zeros_like(p)))
            flags.append(True)
        else:
            grads.append(freeze_vector(residual / (T * norm)))
            flags.append(False)
    return LossGradient(gradients=tuple(grads), degenerate=tuple(flags))


def tcr_loss_score_gradient(
    score_vectors: Sequence[Sequence[float]],
    planned_bins: Sequence[int],
) -> LossGradient:
    """dL/ds_t for the loss taken over softmax(s_t), through the softmax Jacobian."""

    distributions = [stable_softmax(s) for s in score_vectors]
    by_distribution = tcr_loss_gradient(distributions, planned_bins)
    grads: list[Vector] = []
    for p, g in zip(distributions, by_distribution.gradients):
        jacobian = np.diag(p) - np.outer(p, p)
        grads.append(freeze_vector(jacobian @ np.asarray(g, dtype=np.float64)))
    return LossGradient(gradients=tuple(grads), degenerate=by_distribution.degenerate)


def bin_width_for_cap(max_segment_s: float) -> float:
    return max_segment_s / BINS_PER_CAP


def timeline_bins(video: VideoDescriptor, bin_width_s: float) -> list[TemporalInterval]:
    count = max(1, math.ceil(video.duration_s / bin_width_s - 1e-9))
    return [
        TemporalInterval(i * bin_width_s, min((i + 1) * bin_width_s, video.duration_s))
        for i in range(count)
    ]


def bin_of_time(time_s: float, bin_width_s: float, bin_count: int) -> int:
    return min(max(int(math.floor(time_s / bin_width_s)), 0), bin_count - 1)


def make_refinement_delta(
    alignment: AlignmentResult,
    planned: TemporalInterval,
    video: VideoDescriptor,
) -> RefinementDelta:
    """Turn an alignment into a centre shift and length scale for the next proposal."""

    bins = timeline_bins(video, alignment.bin_width_s)
    if len(bins) != alignment.bin_count:
        raise ValueError(
            f"alignment has {alignment.bin_count} bins, timeline has {len(bins)}"
        )
    planned_bin = bin_of_time(planned.center, alignment.bin_width_s, len(bins))
    best = alignment.argmax_bin
    if best == planned_bin:
        center = planned.center
    else:
        center = bins[best].center
    center = min(max(center, 0.0), video.duration_s)
    term = loss_term(alignment.distribution, planned_bin)
    scale = max(MIN_SCALE, 1.0 - term / SQRT2)
    return RefinementDelta(
        suggested_center_s=float(center),
        scale=float(min(scale, 1.0)),
        loss_contribution=term,
    )


class TimelineFeatures:
    """Per-session cache of timeline bin features.

    Features are the mean of coarse probes at evenly spaced times inside each bin and are built
    once, on first use.
    """

    def __init__(
        self,
        video: VideoDescriptor,
        bin_width_s: float,
        probe: Callable[[str, float], Sequence[float]],
    ) -> None:
        self.video = video
        self.bin_width_s = bin_width_s
        self._probe = probe
        self._features: np.ndarray | None = None
        self._lock = threading.Lock()
        self.probe_count = 0

    @property
    def bins(self) -> list[TemporalInterval]:
        return timeline_bins(self.video, self.bin_width_s)

    def probe_times(self) -> list[float]:
        times: list[float] = []
        for b in self.bins:
            step = b.length / PROBES_PER_BIN
            times.extend(b.start_s + step * (j + 0.5) for j in range(PROBES_PER_BIN))
        return times

    def features(self) -> np.ndarray:
        with self._lock:
            if self._features is None:
                vectors = []
                for t in self.probe_times():
                    vectors.append(np.asarray(self._probe(self.video.id, t), dtype=np.float64))
                    self.probe_count += 1
                stacked = np.stack(vectors)
                self._features = stacked.reshape(len(self.bins), PROBES_PER_BIN, -1).mean(axis=1)
            return self._features
