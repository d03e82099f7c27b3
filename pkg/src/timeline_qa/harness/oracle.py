"""Exhaustive cap-window scan used as ground truth for localization and frame cost."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from timeline_qa.backends.world import ScriptedWorld, scripted_embed
from timeline_qa.core.types import TemporalInterval
from timeline_qa.harness.suite import SuiteQuestion

NOISE_FLOOR = 1e-3
NOT_FOUND_SIGMAS = 3.0
MAD_SCALE = 1.4826


@dataclass(frozen=True)
class OracleResult:
    answer_interval: TemporalInterval
    frames_scanned: int
    found: bool
    best_score: float
    threshold: float

    def to_dict(self) -> dict[str, object]:
        return {
            "window": [self.answer_interval.start_s, self.answer_interval.end_s],
            "frames": self.frames_scanned,
            "found": self.found,
        }


def _cosines(frames: np.ndarray, keyword: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(frames, axis=1) * float(np.linalg.norm(keyword))
    dots = frames @ keyword
    return np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)


def oracle_windows(duration_s: float, cap_s: float) -> list[TemporalInterval]:
    count = max(1, math.ceil(duration_s / cap_s - 1e-9))
    return [
        TemporalInterval(j * cap_s, min((j + 1) * cap_s, duration_s)) for j in range(count)
    ]


def brute_force_oracle(
    world: ScriptedWorld,
    question: SuiteQuestion,
    *,
    cap_s: float = 180.0,
    budget_k: int = 16,
) -> OracleResult:
    """Score every cap window by its best frame and return the winner.

    The event counts as not found when the best score does not clear the background similarity
    by three robust standard deviations of all scanned scores.
    """

    video = world.video(question.video_id)
    keyword = world.text_embedding(question.text)
    windows = oracle_windows(video.descriptor.duration_s, cap_s)

    all_scores: list[np.ndarray] = []
    best_index, best_score = 0, -math.inf
    for j, window in enumerate(windows):
        times = np.linspace(window.start_s, window.end_s, budget_k)
        frames = np.stack([scripted_embed(world, question.video_id, float(t)) for t in times])
        scores = _cosines(frames, keyword)
        all_scores.append(scores)
        window_score = float(scores.max())
        if window_score > best_score:
            best_index, best_score = j, window_score

    flat = np.concatenate(all_scores)
    sigma = MAD_SCALE * float(np.median(np.abs(flat - np.median(flat))))
    background = _cosines(
        np.asarray(video.background_embedding, dtype=np.float64)[None, :], keyword
    )[0]
    threshold = float(background) + NOT_FOUND_SIGMAS * max(sigma, NOISE_FLOOR)
    return OracleResult(
        answer_interval=windows[best_index],
        frames_scanned=len(windows) * budget_k,
        found=best_score >= threshold,
        best_score=best_score,
        threshold=threshold,
    )
