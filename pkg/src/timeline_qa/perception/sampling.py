"""Frame selection inside a proposed interval.

Units:
- Times are seconds on the video timeline; density weights are per whole second from the
  interval start.

Determinism:
- Inverse-CDF quantiles are fixed (j/(k-1)); de-duplication keeps the first time per frame and
  tops up with the highest-weight unused frames, earliest first on ties.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from timeline_qa.core.types import TemporalInterval, VideoDescriptor
from timeline_qa.errors import UndefinedMeasureError

# Reselect when a gap's variance exceeds this multiple of the median gap variance.
RESELECT_FACTOR = 4.0

# Floor weight so low-variance seconds keep a little sampling mass.
DENSITY_FLOOR = 0.02


def _cell_edges(interval: TemporalInterval) -> np.ndarray:
    count = max(1, math.ceil(interval.length - 1e-9))
    edges = interval.start_s + np.arange(count + 1, dtype=np.float64)
    edges[-1] = interval.end_s
    return edges


def available_frames(interval: TemporalInterval, video: VideoDescriptor) -> list[int]:
    """Frame indices whose timestamps fall inside the interval."""

    first = max(0, math.ceil(interval.start_s * video.fps - 1e-9))
    last = min(video.frame_count - 1, math.floor(interval.end_s * video.fps + 1e-9))
    return list(range(first, last + 1))


def _weights_for(interval: TemporalInterval, density_profile: Sequence[float] | None) -> np.ndarray:
    edges = _cell_edges(interval)
    cells = edges.size - 1
    if density_profile is None:
        return np.ones(cells, dtype=np.float64)
    weights = np.asarray(density_profile, dtype=np.float64)
    if weights.size != cells:
        raise ValueError(
            f"density profile has {weights.size} weights, interval has {cells} seconds"
        )
    if np.any(weights <= 0):
        raise ValueError("density weights must be positive")
    return weights


def _inverse_cdf(edges: np.ndarray, weights: np.ndarray, quantiles: np.ndarray) -> np.ndarray:
    widths = np.diff(edges)
    mass = weights * widths
    cdf = np.concatenate([[0.0], np.cumsum(mass)])
    targets = quantiles * cdf[-1]
    cell = np.clip(np.searchsorted(cdf, targets, side="right") - 1, 0, weights.size - 1)
    within = (targets - cdf[cell]) / weights[cell]
    return np.minimum(edges[cell] + within, edges[-1])


def select_frames(
    interval: TemporalInterval,
    video: VideoDescriptor,
    density_profile: Sequence[float] | None,
    budget_k: int,
) -> list[float]:
    """Pick min(budget_k, available frames) times inside the interval, sorted.

    ``density_profile`` of None means uniform; with uniform density the times are evenly
    spaced and include both endpoints. Times past the last frame are pulled back to its time.
    """

    if budget_k < 2:
        raise ValueError("budget_k must be at least 2")
    last_time = video.frame_time(video.frame_count - 1)
    frames = available_frames(interval, video)
    if not frames:
        return [min(max(interval.center, 0.0), last_time)]
    if budget_k >= len(frames):
        return [
            min(max(video.frame_time(i), interval.start_s), interval.end_s) for i in frames
        ]

    edges = _cell_edges(interval)
    weights = _weights_for(interval, density_profile)
    quantiles = np.arange(budget_k, dtype=np.float64) / (budget_k - 1)
    times = _inverse_cdf(edges, weights, quantiles)

    valid = set(frames)
    chosen: dict[int, float] = {}
    for t in np.minimum(times, last_time).tolist():
        index = video.frame_index(t)
        if index not in chosen and index in valid:
            chosen[index] = t
    if len(chosen) < budget_k:
        def cell_weight(i: int) -> float:
            t = video.frame_time(i)
            cell = int(np.clip(np.searchsorted(edges, t, side="right") - 1, 0, weights.size - 1))
            return float(weights[cell])

        spare = sorted((i for i in frames if i not in chosen), key=lambda i: (-cell_weight(i), i))
        for i in spare[: budget_k - len(chosen)]:
            chosen[i] = min(max(video.frame_time(i), interval.start_s), interval.end_s)
    return sorted(chosen.values())


def semantic_variance(embeddings: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    """Squared Euclidean distance between consecutive embeddings."""

    stacked = np.asarray(embeddings, dtype=np.float64)
    if stacked.ndim != 2 or stacked.shape[0] < 2:
        raise UndefinedMeasureError("variance needs at least two embeddings")
    diffs = np.diff(stacked, axis=0)
    return np.sum(diffs * diffs, axis=1)


def should_reselect(variances: np.ndarray, factor: float = RESELECT_FACTOR) -> bool:
    if variances.size == 0:
        return False
    return bool(np.max(variances) > factor * np.median(variances))


def variance_density(
    interval: TemporalInterval,
    sample_times: Sequence[float],
    variances: np.ndarray,
) -> list[float]:
    """Per-second weights: each second takes the weight of the sampling gap holding its midpoint."""

    edges = _cell_edges(interval)
    peak = float(np.max(variances)) if variances.size else 0.0
    if peak <= 0.0:
        return [1.0] * (edges.size - 1)
    gap_weights = DENSITY_FLOOR + variances / peak
    times = np.asarray(sample_times, dtype=np.float64)
    midpoints = (edges[:-1] + edges[1:]) / 2.0
    gap = np.clip(np.searchsorted(times, midpoints, side="right") - 1, 0, gap_weights.size - 1)
    return gap_weights[gap].tolist()
