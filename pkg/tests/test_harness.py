from __future__ import annotations

import dataclasses
import json
from collections import Counter
from pathlib import Path

import pytest
from jsonschema.exceptions import ValidationError

from timeline_qa.controller.session import SessionConfig
from timeline_qa.core.types import QueryOption, TemporalInterval
from timeline_qa.harness.default_suite import default_suite
from timeline_qa.harness.grading import extract_letter, grade, normalize_answer
from timeline_qa.harness.oracle import brute_force_oracle, oracle_windows
from timeline_qa.harness.render import (
    OutputFormat,
    ablation_document,
    render_ablation,
    render_report,
    render_sweep,
    write_report_files,
)
from timeline_qa.harness.runner import (
    RunReport,
    ablation_table,
    accuracy_drops,
    duration_sweep,
    run_suite,
    stretch_suite,
)
from timeline_qa.harness.suite import ScriptedSuite, SuiteQuestion, load_suite, write_suite
from timeline_qa.outputs import write_manifest
from timeline_qa.validate import validate_run_report

OPTIONS = (QueryOption("A", "a kettle"), QueryOption("B", "a ladder"), QueryOption("C", "a cat"))


def _kite_question(text: str = "What lands on the roof?") -> SuiteQuestion:
    return SuiteQuestion(
        question_id="kite-0",
        world_id="kite",
        video_id="roof",
        text=text,
        gold_answer="red kite",
        gold_interval=TemporalInterval(400, 430),
    )


@pytest.fixture(scope="module")
def suite_report() -> RunReport:
    return run_suite(default_suite(), SessionConfig(), workers=4)


def test_oracle_windows_cover_the_video() -> None:
    windows = oracle_windows(600.0, 180.0)
    assert windows[0] == TemporalInterval(0, 180)
    assert windows[-1] == TemporalInterval(540, 600)
    assert oracle_windows(90.0, 180.0) == [TemporalInterval(0, 90)]


def test_oracle_finds_the_event(kite_world) -> None:
    result = brute_force_oracle(kite_world(), _kite_question())
    assert result.found
    assert result.answer_interval == TemporalInterval(360, 540)
    assert result.frames_scanned == 64

    short = brute_force_oracle(kite_world(duration_s=90.0), _kite_question())
    assert short.frames_scanned == 16


def test_oracle_reports_not_found_for_background_keyword(kite_world) -> None:
    world = kite_world()
    background = tuple(1.0 if j == 0 else 0.0 for j in range(8))
    blind = dataclasses.replace(world, text_embeddings=(("what lands on the roof", background),))
    result = brute_force_oracle(blind, _kite_question())
    assert not result.found
    assert result.best_score < result.threshold


@pytest.mark.parametrize(
    ("answer", "gold", "options", "expected"),
    [
        ("Red Kite.", "red kite", None, True),
        ("  red   kite ", "Red kite", None, True),
        ("Answer: red kite", "red kite", None, True),
        ("a pigeon", "red kite", None, False),
        ("", "", None, False),
        ("b", "B", OPTIONS, True),
        ("(B)", "B", OPTIONS, True),
        ("Answer: C", "C", OPTIONS, True),
        ("D", "D", OPTIONS, False),
        ("a ladder", "B", OPTIONS, False),
    ],
)
def test_grade(answer: str, gold: str, options, expected: bool) -> None:
    assert grade(answer, gold, options) is expected
    assert grade(gold, answer, options) is expected


def test_answer_normalization_helpers() -> None:
    assert normalize_answer(" The  Kettle! ") == "the kettle"
    assert extract_letter("c.", ["A", "B", "C"]) == "C"
    assert extract_letter("cat", ["A", "B", "C"]) is None


def test_default_suite_shape() -> None:
    suite = default_suite()
    assert len(suite) == 60
    assert len(suite.worlds) == 3
    for world in suite.worlds:
        tags = Counter(q.tags[0] for q in suite if q.world_id == world.world_id)
        assert tags == {"long": 8, "short": 8, "pair": 4}
    assert len({q.question_id for q in suite}) == 60


def test_suite_export_round_trips(tmp_path: Path) -> None:
    suite = default_suite()
    written = write_suite(suite, tmp_path)
    write_manifest(tmp_path, written)
    loaded = load_suite(tmp_path)
    assert [q.question_id for q in loaded] == [q.question_id for q in suite]
    assert loaded.to_documents() == suite.to_documents()


def test_suite_rejects_duplicate_worlds(tmp_path: Path) -> None:
    document = default_suite().to_documents()[0]
    for name in ("a.json", "b.json"):
        (tmp_path / name).write_text(json.dumps(document), encoding="utf-8")
    with pytest.raises(ValueError, match="duplicate world id"):
        load_suite(tmp_path)


def test_stretch_suite_scales_gold_intervals() -> None:
    base = default_suite().subset(tag="long", world_id="kitchen")
    stretched = stretch_suite(base, 2400.0)
    assert len(stretched) == len(base) == 8
    for before, after in zip(base, stretched):
        assert after.gold_interval.start_s == pytest.approx(2 * before.gold_interval.start_s)
        assert after.question_id.endswith("@2400s")
        video = stretched.world(after.world_id).descriptor(after.video_id)
        assert video.duration_s == 2400.0


def test_suite_run_matches_oracle(suite_report: RunReport) -> None:
    assert suite_report.failures == []
    agreement = suite_report.oracle_agreement()
    assert agreement["comparable"] > 0
    assert agreement["rate"] >= 0.95
    assert agreement["frames_within_oracle"]
    for q in suite_report.questions:
        assert q.embed_calls == q.frames
        if q.duration_s >= 1200.0:
            assert q.frames <= q.oracle.frames_scanned


def test_suite_run_accuracy_and_budget(suite_report: RunReport) -> None:
    assert suite_report.accuracy >= 0.9
    cfg = SessionConfig()
    for q in suite_report.questions:
        assert q.frames <= cfg.budget.max_total_frames + cfg.budget_k
        assert q.iterations <= cfg.budget.max_iterations
        assert q.visual_tokens == q.frames * cfg.tokens_per_frame
        assert 0.0 <= q.token_saving <= 1.0


def test_report_document_validates_and_renders(suite_report: RunReport, tmp_path: Path) -> None:
    document = suite_report.to_dict()
    validate_run_report(document)

    text = render_report(document, OutputFormat.TEXT)
    assert text.startswith("timeline-qa run report")
    table = render_report(document, OutputFormat.TABLE)
    assert table.splitlines()[0].startswith("question_id,world_id,video_id")
    assert len(table.splitlines()) == 61
    assert json.loads(render_report(document, OutputFormat.STRUCTURED)) == json.loads(
        json.dumps(document)
    )

    written = write_report_files(document, tmp_path)
    assert sorted(p.name for p in written) == [
        "report.csv",
        "report.html",
        "report.json",
        "report.txt",
    ]
    assert "<html" in (tmp_path / "report.html").read_text(encoding="utf-8").lower()


def test_report_aggregate_mismatch_is_rejected(suite_report: RunReport) -> None:
    document = suite_report.to_dict()
    document["aggregates"]["accuracy"] = 0.0 if suite_report.accuracy else 1.0
    with pytest.raises(ValidationError):
        validate_run_report(document)


def test_duration_sweep_frame_fraction_falls() -> None:
    base = default_suite().subset(tag="long", world_id="kitchen")
    fractions = duration_sweep(base, (30.0, 300.0, 1200.0, 3000.0), SessionConfig(), workers=4)
    assert list(fractions) == ["30", "300", "1200", "3000"]
    values = list(fractions.values())
    assert all(b < a for a, b in zip(values, values[1:]))
    assert fractions["3000"] <= 0.25

    rendered = render_sweep(fractions, OutputFormat.TABLE)
    assert rendered.splitlines()[0] == "duration_s,frame_fraction"


@pytest.mark.parametrize("durations", [(), (300.0, 30.0), (0.0, 30.0)])
def test_duration_sweep_rejects_bad_durations(durations: tuple[float, ...]) -> None:
    with pytest.raises(ValueError):
        duration_sweep(ScriptedSuite(), durations, SessionConfig())


def test_ablation_order_over_ten_seeds() -> None:
    seeds = list(range(10))
    rows = ablation_table(default_suite(), SessionConfig(), seeds, workers=4)
    assert [r.label for r in rows] == ["full", "no-tm", "no-tcr", "no-rtp"]
    means = [r.mean_accuracy for r in rows]
    assert means[0] >= means[1] >= means[2] >= means[3]
    assert all(len(r.accuracies) == 10 for r in rows)

    drops = accuracy_drops(rows)
    assert drops["full"] == 0.0
    assert drops["no-rtp"] >= drops["no-tm"]

    document = ablation_document(rows, seeds)
    assert [row["config"] for row in document["rows"]] == ["full", "no-tm", "no-tcr", "no-rtp"]
    assert render_ablation(rows, seeds, OutputFormat.TEXT).startswith("config")
