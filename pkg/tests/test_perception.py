from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
import pytest

from timeline_qa.backends.ports import CountingVisionPort, VisionPort
from timeline_qa.core.types import (
    EpisodeOrigin,
    ReasoningEpisode,
    TemporalInterval,
    VideoDescriptor,
)
from timeline_qa.errors import (
    DimensionMismatchError,
    EmptyInputError,
    PortError,
    UndefinedMeasureError,
)
from timeline_qa.perception.grounding import FrameCache, ground_segment
from timeline_qa.perception.projection import (
    AggregationMode,
    Projector,
    aggregate_segment,
    gelu,
    project_tokens,
)
from timeline_qa.perception.sampling import select_frames, semantic_variance, should_reselect

VIDEO = VideoDescriptor.from_duration("v", 600.0)
E1 = (1.0, 0.0, 0.0, 0.0)
E2 = (0.0, 1.0, 0.0, 0.0)


class _ConstantVision(VisionPort):
    def embed(self, video_id: str, time_s: float) -> Sequence[float]:
        return E1

    def describe(self, video_id: str, interval: TemporalInterval) -> str:
        return "a quiet hallway"


class _SceneChangeVision(VisionPort):
    def __init__(self, change_s: float) -> None:
        self.change_s = change_s

    def embed(self, video_id: str, time_s: float) -> Sequence[float]:
        return E1 if time_s < self.change_s else E2

    def describe(self, video_id: str, interval: TemporalInterval) -> str:
        return "the lights go out"


class _BrokenVision(VisionPort):
    def embed(self, video_id: str, time_s: float) -> Sequence[float]:
        raise PortError("frame decoder crashed")

    def describe(self, video_id: str, interval: TemporalInterval) -> str:
        return ""


def _episode(start: float, end: float) -> ReasoningEpisode:
    return ReasoningEpisode(1, "look", TemporalInterval(start, end), EpisodeOrigin.PLANNED)


def _reference_gelu(x: float) -> float:
    return 0.5 * x * math.erfc(-x / math.sqrt(2.0))


def test_select_frames_uniform_includes_endpoints() -> None:
    video = VideoDescriptor.from_duration("v", 20.0)
    times = select_frames(TemporalInterval(0, 10), video, None, 5)
    assert times == pytest.approx([0.0, 2.5, 5.0, 7.5, 10.0])


def test_select_frames_follows_density() -> None:
    video = VideoDescriptor.from_duration("v", 20.0)
    profile = [1.0] * 5 + [2.0] * 5
    times = select_frames(TemporalInterval(0, 10), video, profile, 4)
    assert sum(t >= 5.0 for t in times) > sum(t < 5.0 for t in times)

    edges = np.arange(11, dtype=np.float64)
    cdf = np.concatenate([[0.0], np.cumsum(profile)])
    expected = np.interp(np.linspace(0.0, 1.0, 4) * cdf[-1], cdf, edges)
    assert times == pytest.approx(expected.tolist())


def test_select_frames_short_interval_returns_available_frames() -> None:
    video = VideoDescriptor.from_duration("v", 10.0)
    assert select_frames(TemporalInterval(0, 0.4), video, None, 5) == [0.0]
    assert select_frames(TemporalInterval(2, 4), video, None, 16) == [2.0, 3.0, 4.0]


def test_select_frames_at_video_end_stop_at_last_frame() -> None:
    times = select_frames(TemporalInterval(420, 600), VIDEO, None, 16)
    assert len(times) == 16
    assert max(times) == pytest.approx(VIDEO.frame_time(VIDEO.frame_count - 1))
    assert all(VIDEO.frame_index(t) == math.floor(t * VIDEO.fps + 0.5) for t in times)


def test_select_frames_rejects_tiny_budget() -> None:
    with pytest.raises(ValueError):
        select_frames(TemporalInterval(0, 10), VIDEO, None, 1)


def test_select_frames_respects_budget_and_bounds() -> None:
    rng = np.random.default_rng(9)
    for _ in range(100):
        start = float(rng.uniform(0, 400))
        length = float(rng.uniform(5, 180))
        interval = TemporalInterval(start, start + length)
        k = int(rng.integers(2, 33))
        cells = max(1, math.ceil(length - 1e-9))
        profile = rng.uniform(0.02, 1.0, size=cells).tolist()
        times = select_frames(interval, VIDEO, profile, k)
        assert len(times) <= k
        assert times == sorted(times)
        assert all(interval.start_s <= t <= interval.end_s for t in times)
        assert len({VIDEO.frame_index(t) for t in times}) == len(times)


def test_semantic_variance_examples() -> None:
    assert semantic_variance([E1, E1, E1]).tolist() == [0.0, 0.0]
    assert semantic_variance([(0, 0), (1, 0), (1, 0)]).tolist() == [1.0, 0.0]
    assert semantic_variance([E1, E2, E1]).tolist() == [2.0, 2.0]
    with pytest.raises(UndefinedMeasureError):
        semantic_variance([E1])


def test_should_reselect() -> None:
    assert not should_reselect(np.zeros(5))
    assert should_reselect(np.array([0.0, 0.0, 2.0, 0.0]))
    assert not should_reselect(np.array([1.0, 1.0, 1.0]))


def test_gelu_matches_erf_definition() -> None:
    assert float(gelu(np.array(1.0))) == pytest.approx(0.8413447460685429, abs=1e-12)
    assert float(gelu(np.array(0.0))) == 0.0
    for x in np.linspace(-8.0, 8.0, 161):
        assert float(gelu(np.array(x))) == pytest.approx(_reference_gelu(float(x)), abs=1e-12)


def test_projector_examples() -> None:
    identity = Projector(np.eye(1), np.eye(1))
    assert project_tokens([(0.0,)], identity).tolist() == [[0.0]]
    assert project_tokens([(1.0,)], identity)[0, 0] == pytest.approx(0.8413447460685429)

    doubled = Projector(2.0 * np.eye(1), np.eye(1))
    tail = float(project_tokens([(-3.0,)], doubled)[0, 0])
    assert tail == pytest.approx(_reference_gelu(-6.0), abs=1e-12)
    assert tail < 0.0


def test_projector_matches_reference_on_random_weights() -> None:
    rng = np.random.default_rng(10)
    for _ in range(20):
        d, h, p = (int(v) for v in rng.integers(2, 9, size=3))
        w1 = rng.normal(size=(h, d))
        w2 = rng.normal(size=(p, h))
        z = rng.normal(size=(5, d))
        got = project_tokens(z, Projector(w1, w2))
        for row, zi in zip(got, z):
            hidden = [_reference_gelu(float(np.dot(w1[j], zi))) for j in range(h)]
            expected = [sum(w2[i][j] * hidden[j] for j in range(h)) for i in range(p)]
            assert np.max(np.abs(row - np.asarray(expected))) < 1e-9


def test_projector_dimension_checks(tmp_path: Path) -> None:
    with pytest.raises(DimensionMismatchError):
        Projector(np.eye(3), np.eye(2))
    proj = Projector.seeded(4, seed=1)
    with pytest.raises(DimensionMismatchError):
        project_tokens([(1.0, 2.0)], proj)

    path = tmp_path / "projector.npz"
    proj.save(path)
    loaded = Projector.load(path)
    np.testing.assert_array_equal(loaded.w1, proj.w1)
    np.testing.assert_array_equal(loaded.w2, proj.w2)


def test_aggregate_segment_examples() -> None:
    assert aggregate_segment([(1.0, 0.0), (0.0, 1.0)]).tolist() == [0.5, 0.5]
    assert aggregate_segment([(3.0, 4.0)]).tolist() == [3.0, 4.0]
    same = aggregate_segment([(0.2, 0.4)] * 3, AggregationMode.ATTENTION_WEIGHTED)
    np.testing.assert_allclose(same, [0.2, 0.4])
    with pytest.raises(EmptyInputError):
        aggregate_segment([])


def test_attention_aggregate_stays_in_the_hull() -> None:
    rng = np.random.default_rng(12)
    for _ in range(50):
        tokens = rng.normal(size=(6, 3))
        out = aggregate_segment(tokens, AggregationMode.ATTENTION_WEIGHTED)
        assert np.all(out <= tokens.max(axis=0) + 1e-12)
        assert np.all(out >= tokens.min(axis=0) - 1e-12)


def test_ground_segment_constant_embeddings() -> None:
    vision = CountingVisionPort(_ConstantVision())
    proj = Projector.seeded(4, seed=0)
    evidence = ground_segment(_episode(0, 100), VIDEO, vision, proj, 8)
    assert len(evidence.samples) == 8
    assert not evidence.reselected
    assert evidence.frame_cost == 8
    assert vision.embed_calls == 8
    assert evidence.description == "a quiet hallway"
    np.testing.assert_allclose(evidence.aggregate, evidence.projected[0])
    np.testing.assert_allclose(evidence.centroid, E1)


def test_ground_segment_reselects_around_scene_change() -> None:
    vision = CountingVisionPort(_SceneChangeVision(50.0))
    evidence = ground_segment(_episode(0, 100), VIDEO, vision, Projector.seeded(4), 8)
    assert evidence.reselected
    near = [s for s in evidence.samples if 40.0 <= s.time_s <= 60.0]
    assert len(near) / len(evidence.samples) >= 0.6
    assert evidence.frame_cost == 14
    assert vision.embed_calls == evidence.frame_cost


def test_ground_segment_skips_reselection_over_allowance() -> None:
    evidence = ground_segment(
        _episode(0, 100),
        VIDEO,
        _SceneChangeVision(50.0),
        Projector.seeded(4),
        8,
        frame_allowance=10,
    )
    assert not evidence.reselected
    assert evidence.frame_cost == 8


def test_ground_segment_with_two_frames_uses_endpoints() -> None:
    vision = CountingVisionPort(_ConstantVision())
    evidence = ground_segment(_episode(10, 70), VIDEO, vision, Projector.seeded(4), 2)
    assert [s.time_s for s in evidence.samples] == [10.0, 70.0]
    assert vision.embed_calls == 2


def test_ground_segment_reuses_cached_frames() -> None:
    cache = FrameCache()
    vision = CountingVisionPort(_ConstantVision())
    proj = Projector.seeded(4)
    first = ground_segment(_episode(0, 100), VIDEO, vision, proj, 8, cache=cache, workers=4)
    second = ground_segment(_episode(0, 100), VIDEO, vision, proj, 8, cache=cache)
    assert first.frame_cost == 8
    assert second.frame_cost == 0
    assert len(second.samples) == 8
    assert vision.embed_calls == 8


def test_ground_segment_port_failure_carries_context() -> None:
    with pytest.raises(PortError) as excinfo:
        ground_segment(_episode(0, 100), VIDEO, _BrokenVision(), Projector.seeded(4), 8)
    assert any("while grounding iteration 1" in note for note in excinfo.value.__notes__)
