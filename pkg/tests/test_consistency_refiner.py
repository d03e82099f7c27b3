from __future__ import annotations

import math

import numpy as np
import pytest

from timeline_qa.consistency.refiner import (
    MIN_SCALE,
    AlignmentResult,
    TimelineFeatures,
    alignment_distribution,
    bin_of_time,
    cosine_similarity,
    make_refinement_delta,
    stable_softmax,
    tcr_loss,
    tcr_loss_gradient,
    tcr_loss_score_gradient,
    timeline_bins,
)
from timeline_qa.core.types import TemporalInterval, VideoDescriptor, freeze_vector
from timeline_qa.errors import (
    BinIndexError,
    DimensionMismatchError,
    EmptyInputError,
    UndefinedMeasureError,
)

VIDEO = VideoDescriptor.from_duration("v", 600.0)


@pytest.mark.parametrize(
    ("a", "b", "expected"),
    [
        ((1, 0), (1, 0), 1.0),
        ((1, 0), (0, 1), 0.0),
        ((1, 0), (-1, 0), -1.0),
        ((1, 0), (1, 1), 1.0 / math.sqrt(2.0)),
        ((2, 0), (5, 0), 1.0),
    ],
)
def test_cosine_similarity(a: tuple, b: tuple, expected: float) -> None:
    assert cosine_similarity(a, b) == pytest.approx(expected, abs=1e-12)


def test_cosine_similarity_errors() -> None:
    with pytest.raises(UndefinedMeasureError):
        cosine_similarity((0, 0), (1, 0))
    with pytest.raises(DimensionMismatchError):
        cosine_similarity((1, 0), (1, 0, 0))


def test_softmax_normalizes_including_extremes() -> None:
    rng = np.random.default_rng(1)
    for i in range(1000):
        size = int(rng.integers(1, 40))
        scores = rng.uniform(-1e4, 1e4, size=size)
        if i % 3 == 0:
            scores[0] = 1e4
            scores[-1] = -1e4
        p = stable_softmax(scores)
        assert np.all(np.isfinite(p))
        assert np.all(p >= 0.0)
        assert abs(float(np.sum(p)) - 1.0) < 1e-9


def test_softmax_is_shift_invariant() -> None:
    rng = np.random.default_rng(2)
    for _ in range(200):
        x = rng.uniform(-10.0, 10.0, size=int(rng.integers(1, 20)))
        c = float(rng.uniform(-100.0, 100.0))
        np.testing.assert_allclose(stable_softmax(x + c), stable_softmax(x), rtol=0, atol=1e-12)


def test_softmax_rejects_empty() -> None:
    with pytest.raises(EmptyInputError):
        stable_softmax([])


def test_alignment_distribution_examples() -> None:
    uniform = alignment_distribution((1, 0), [(1, 0), (1, 0), (1, 0)])
    assert uniform.distribution == pytest.approx((1 / 3, 1 / 3, 1 / 3))

    two = alignment_distribution((1, 0), [(1, 0), (0, 1)])
    e = math.e
    assert two.distribution == pytest.approx((e / (e + 1), 1 / (e + 1)))
    assert two.argmax_bin == 0

    single = alignment_distribution((0.3, 0.7), [(5.0, 1.0)])
    assert single.distribution == (1.0,)

    with pytest.raises(EmptyInputError):
        alignment_distribution((1, 0), [])


def test_alignment_argmax_ignores_feature_scale() -> None:
    rng = np.random.default_rng(3)
    for _ in range(50):
        episode = rng.standard_normal(6)
        features = rng.standard_normal((10, 6))
        base = alignment_distribution(episode, features)
        scaled = alignment_distribution(episode, features * float(rng.uniform(0.1, 10.0)))
        assert base.argmax_bin == scaled.argmax_bin


def test_loss_extremes_are_exact() -> None:
    assert tcr_loss([(0.0, 1.0, 0.0)], [1]) == 0.0
    assert tcr_loss([(0.0, 1.0)], [0]) == math.sqrt(2.0)
    assert tcr_loss([(0.5, 0.5)], [0]) == pytest.approx(math.sqrt(0.5), abs=1e-12)


def test_loss_is_bounded() -> None:
    rng = np.random.default_rng(4)
    for _ in range(200):
        bins = int(rng.integers(1, 16))
        terms = int(rng.integers(1, 5))
        distributions = [stable_softmax(rng.normal(0, 3, size=bins)) for _ in range(terms)]
        planned = [int(rng.integers(0, bins)) for _ in range(terms)]
        loss = tcr_loss(distributions, planned)
        assert 0.0 <= loss <= math.sqrt(2.0) + 1e-12


def test_loss_input_errors() -> None:
    with pytest.raises(BinIndexError):
        tcr_loss([(0.5, 0.5)], [2])
    with pytest.raises(ValueError):
        tcr_loss([(0.5, 0.5)], [0, 1])
    with pytest.raises(EmptyInputError):
        tcr_loss([], [])


def test_gradient_examples() -> None:
    single = tcr_loss_gradient([(0.5, 0.5)], [0])
    assert single.gradients[0] == pytest.approx((-1 / math.sqrt(2.0), 1 / math.sqrt(2.0)))
    assert single.degenerate == (False,)

    by_score = tcr_loss_score_gradient([(0.0, 0.0)], [0])
    assert by_score.gradients[0] == pytest.approx((-0.3536, 0.3536), abs=1e-4)

    doubled = tcr_loss_gradient([(0.5, 0.5), (0.5, 0.5)], [0, 0])
    for g in doubled.gradients:
        assert g == pytest.approx(tuple(v / 2 for v in single.gradients[0]))

    aligned = tcr_loss_gradient([(1.0, 0.0), (0.5, 0.5)], [0, 0])
    assert aligned.gradients[0] == (0.0, 0.0)
    assert aligned.degenerate == (True, False)


def _central_difference(loss, point: list[np.ndarray], h: float = 1e-6) -> list[np.ndarray]:
    grads = []
    for t, vector in enumerate(point):
        g = np.zeros_like(vector)
        for i in range(vector.size):
            up = [v.copy() for v in point]
            down = [v.copy() for v in point]
            up[t][i] += h
            down[t][i] -= h
            g[i] = (loss(up) - loss(down)) / (2 * h)
        grads.append(g)
    return grads


def test_gradient_matches_finite_differences() -> None:
    rng = np.random.default_rng(5)
    for _ in range(100):
        bins = int(rng.integers(2, 17))
        terms = int(rng.integers(1, 6))
        planned = [int(rng.integers(0, bins)) for _ in range(terms)]
        distributions = [stable_softmax(rng.normal(0, 2, size=bins)) for _ in range(terms)]

        analytic = tcr_loss_gradient(distributions, planned)
        numeric = _central_difference(lambda ps: tcr_loss(ps, planned), distributions)
        for a, n in zip(analytic.gradients, numeric):
            np.testing.assert_allclose(np.asarray(a), n, rtol=1e-4, atol=1e-7)


def test_score_gradient_matches_finite_differences() -> None:
    rng = np.random.default_rng(6)
    for _ in range(100):
        bins = int(rng.integers(2, 17))
        terms = int(rng.integers(1, 6))
        planned = [int(rng.integers(0, bins)) for _ in range(terms)]
        scores = [rng.normal(0, 2, size=bins) for _ in range(terms)]

        def loss(ss: list[np.ndarray]) -> float:
            return tcr_loss([stable_softmax(s) for s in ss], planned)

        analytic = tcr_loss_score_gradient(scores, planned)
        numeric = _central_difference(loss, scores)
        for a, n in zip(analytic.gradients, numeric):
            np.testing.assert_allclose(np.asarray(a), n, rtol=1e-4, atol=1e-7)


def _alignment(distribution: np.ndarray) -> AlignmentResult:
    return AlignmentResult(
        scores=freeze_vector(distribution),
        distribution=freeze_vector(distribution),
        bin_width_s=30.0,
    )


def _one_hot(index: int, size: int = 20) -> np.ndarray:
    v = np.zeros(size)
    v[index] = 1.0
    return v


def test_delta_keeps_aligned_plan() -> None:
    delta = make_refinement_delta(_alignment(_one_hot(5)), TemporalInterval(100, 200), VIDEO)
    assert delta.suggested_center_s == pytest.approx(150.0)
    assert delta.scale == 1.0
    assert delta.loss_contribution == 0.0
    assert delta.is_identity_for(TemporalInterval(100, 200))


def test_delta_moves_to_peak_and_shrinks() -> None:
    scores = np.zeros(20)
    scores[18], scores[5] = 3.0, 2.5
    peaked = stable_softmax(scores)
    delta = make_refinement_delta(_alignment(peaked), TemporalInterval(100, 200), VIDEO)
    assert delta.suggested_center_s == pytest.approx(555.0)
    assert MIN_SCALE < delta.scale < 1.0

    worst = make_refinement_delta(_alignment(_one_hot(18)), TemporalInterval(100, 200), VIDEO)
    assert worst.scale == MIN_SCALE
    assert worst.loss_contribution == pytest.approx(math.sqrt(2.0))


def test_delta_ties_resolve_to_earliest_bin() -> None:
    delta = make_refinement_delta(
        _alignment(np.full(20, 1 / 20)), TemporalInterval(100, 200), VIDEO
    )
    assert delta.suggested_center_s == pytest.approx(15.0)


def test_delta_rejects_bin_count_mismatch() -> None:
    with pytest.raises(ValueError):
        make_refinement_delta(_alignment(_one_hot(2, size=5)), TemporalInterval(0, 90), VIDEO)


def test_timeline_bins_and_bin_lookup() -> None:
    bins = timeline_bins(VideoDescriptor.from_duration("w", 100.0), 30.0)
    assert bins[-1] == TemporalInterval(90, 100)
    assert len(bins) == 4
    assert bin_of_time(100.0, 30.0, 4) == 3
    assert bin_of_time(-2.0, 30.0, 4) == 0


def test_timeline_features_probe_once() -> None:
    calls: list[float] = []

    def probe(video_id: str, time_s: float) -> list[float]:
        calls.append(time_s)
        return [1.0, time_s]

    features = TimelineFeatures(VIDEO, 30.0, probe)
    first = features.features()
    second = features.features()
    assert first is second
    assert first.shape == (20, 2)
    assert features.probe_count == 60
    assert len(calls) == 60
    assert first[0][1] == pytest.approx(15.0)
