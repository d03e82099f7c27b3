from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import jsonschema
from jsonschema import Draft202012Validator
from jsonschema.exceptions import ValidationError

WORLD_SCHEMA = Path("worlds") / "scripted_world_v1.schema.json"
SESSION_CONFIG_SCHEMA = Path("config") / "session_config_v1.schema.json"
RUN_REPORT_SCHEMA = Path("reports") / "run_report_v1.schema.json"

# Tolerance when checking that a gold interval coincides with a scripted event.
GOLD_TOLERANCE_S = 0.5


def _find_repo_root(start: Path) -> Path:
    current = start
    for _ in range(10):
        if (current / "pyproject.toml").exists() and (current / "schemas").exists():
            return current
        if current.parent == current:
            break
        current = current.parent
    raise RuntimeError("Could not locate repo root (pyproject.toml + schemas/) from: " + str(start))


def schema_path(relative: Path) -> Path:
    return _find_repo_root(Path(__file__).resolve()) / "schemas" / relative


def load_schema(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _validate_against(
    document: Mapping[str, Any], relative: Path, explicit: str | Path | None
) -> None:
    schema = load_schema(explicit if explicit is not None else schema_path(relative))
    validator = Draft202012Validator(schema, format_checker=jsonschema.FormatChecker())
    validator.validate(dict(document))


def validate_world_document(
    document: Mapping[str, Any],
    *,
    schema_path: str | Path | None = None,
) -> None:
    """Validate a scripted-world document (world plus its questions).

    Raises:
      jsonschema.exceptions.ValidationError if invalid.
    """

    _validate_against(document, WORLD_SCHEMA, schema_path)
    _validate_world_consistency(dict(document))


def validate_session_config(
    document: Mapping[str, Any],
    *,
    schema_path: str | Path | None = None,
) -> None:
    _validate_against(document, SESSION_CONFIG_SCHEMA, schema_path)
    if "max_total_frames" in document and "budget_k" in document:
        if int(document["budget_k"]) > int(document["max_total_frames"]):
            raise ValidationError("budget_k must not exceed max_total_frames")


def validate_run_report(
    report: Mapping[str, Any],
    *,
    schema_path: str | Path | None = None,
) -> None:
    _validate_against(report, RUN_REPORT_SCHEMA, schema_path)
    _validate_report_aggregates(dict(report))


def _validate_world_consistency(document: Mapping[str, Any]) -> None:
    dimension = int(document["dimension"])
    videos: dict[str, Mapping[str, Any]] = {}
    for video in document["videos"]:
        descriptor = video["descriptor"]
        video_id = descriptor["id"]
        if video_id in videos:
            raise ValidationError(f"duplicate video id: {video_id}")
        videos[video_id] = video
        duration = float(descriptor["duration_s"])
        if len(video["background_embedding"]) != dimension:
            raise ValidationError(f"{video_id}: background embedding has wrong dimension")
        for event in video.get("events", []):
            start, end = (float(v) for v in event["interval"])
            if not 0.0 <= start < end <= duration:
                raise ValidationError(
                    f"{video_id}/{event['event_id']}: interval [{start}, {end}] outside the video"
                )
            if len(event["embedding"]) != dimension:
                raise ValidationError(f"{video_id}/{event['event_id']}: wrong embedding dimension")

    for entry in document.get("text_embeddings", []):
        if len(entry["embedding"]) != dimension:
            raise ValidationError(f"text embedding {entry['text']!r} has wrong dimension")

    seen: set[str] = set()
    for question in document.get("questions", []):
        qid = question["question_id"]
        if qid in seen:
            raise ValidationError(f"duplicate question id: {qid}")
        seen.add(qid)
        video = videos.get(question["video_id"])
        if video is None:
            raise ValidationError(f"{qid}: unknown video {question['video_id']}")
        start, end = (float(v) for v in question["gold_interval"])
        if not any(
            abs(float(e["interval"][0]) - start) <= GOLD_TOLERANCE_S
            and abs(float(e["interval"][1]) - end) <= GOLD_TOLERANCE_S
            for e in video.get("events", [])
        ):
            raise ValidationError(f"{qid}: gold_interval does not coincide with a scripted event")
        options = question.get("options")
        if options:
            labels = [o["label"] for o in options]
            if question["gold_answer"] not in labels:
                raise ValidationError(f"{qid}: gold_answer must be one of the option labels")


def _validate_report_aggregates(report: Mapping[str, Any]) -> None:
    aggregates = report["aggregates"]
    for duration, fraction in aggregates["frame_fraction_by_duration"].items():
        if not 0.0 <= float(fraction) <= 1.0:
            raise ValidationError(f"frame fraction for {duration}s outside [0, 1]")
    questions = report["questions"]
    if questions:
        expected = sum(1 for q in questions if q["correct"]) / len(questions)
        if abs(float(aggregates["accuracy"]) - expected) > 1e-9:
            raise ValidationError("aggregates.accuracy does not match the per-question grades")
