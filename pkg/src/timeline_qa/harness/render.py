"""Report emission: structured JSON, delimited table and human-readable text/HTML."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Any, Mapping, Sequence

from jinja2 import Environment, FileSystemLoader, select_autoescape

from timeline_qa.determinism import canonical_json_bytes, write_bytes
from timeline_qa.harness.runner import AblationRow, accuracy_drops

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"

QUESTION_COLUMNS = (
    "question_id",
    "world_id",
    "video_id",
    "duration_s",
    "mode",
    "correct",
    "answer",
    "gold_answer",
    "frames",
    "probe_frames",
    "iterations",
    "terminated_by",
    "confidence",
    "visual_tokens",
    "token_saving",
    "embed_calls",
    "oracle_frames",
    "oracle_overlap",
    "error",
)


class OutputFormat:
    TEXT = "text"
    TABLE = "delimited-table"
    STRUCTURED = "structured"

    ALL = (TEXT, TABLE, STRUCTURED)


def _environment() -> Environment:
    return Environment(
        loader=FileSystemLoader(str(TEMPLATE_DIR)),
        autoescape=select_autoescape(["html", "xml"]),
        trim_blocks=True,
        lstrip_blocks=True,
    )


def render_structured(document: Any) -> str:
    return (canonical_json_bytes(document) + b"\n").decode("utf-8")


def render_text(report: Mapping[str, Any]) -> str:
    return _environment().get_template("report.txt.j2").render(report=report)


def render_html(report: Mapping[str, Any]) -> str:
    return _environment().get_template("report.html.j2").render(report=report)


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def render_table(report: Mapping[str, Any]) -> str:
    rows = []
    for q in report["questions"]:
        oracle = q.get("oracle") or {}
        flat = dict(q, oracle_frames=oracle.get("frames"), oracle_overlap=oracle.get("overlap"))
        rows.append(["" if flat.get(c) is None else flat.get(c) for c in QUESTION_COLUMNS])
    return _csv(QUESTION_COLUMNS, rows)


def render_report(report: Mapping[str, Any], fmt: str) -> str:
    if fmt == OutputFormat.STRUCTURED:
        return render_structured(report)
    if fmt == OutputFormat.TABLE:
        return render_table(report)
    return render_text(report)


def write_report_files(
    report: Mapping[str, Any], out_dir: Path, name: str = "report"
) -> list[Path]:
    """report.json, report.csv, report.txt and report.html under ``out_dir``."""

    outputs = {
        "json": render_structured(report),
        "csv": render_table(report),
        "txt": render_text(report),
        "html": render_html(report),
    }
    written = []
    for suffix, text in outputs.items():
        path = out_dir / f"{name}.{suffix}"
        write_bytes(path, text.encode("utf-8"))
        written.append(path)
    return written


def sweep_document(fractions: Mapping[str, float], config: str) -> dict[str, Any]:
    return {"config": config, "frame_fraction_by_duration": dict(fractions)}


def render_sweep(fractions: Mapping[str, float], fmt: str, config: str = "full") -> str:
    if fmt == OutputFormat.STRUCTURED:
        return render_structured(sweep_document(fractions, config))
    rows = [[d, f"{f:.6f}"] for d, f in fractions.items()]
    if fmt == OutputFormat.TABLE:
        return _csv(("duration_s", "frame_fraction"), rows)
    lines = [f"{'duration_s':<12} {'frame_fraction':>14}"]
    lines += [f"{d:<12} {f:>14}" for d, f in rows]
    return "\n".join(lines) + "\n"


def ablation_document(rows: Sequence[AblationRow], seeds: Sequence[int]) -> dict[str, Any]:
    drops = accuracy_drops(rows)
    return {
        "seeds": list(seeds),
        "rows": [
            {
                "config": row.label,
                "accuracies": list(row.accuracies),
                "mean_accuracy": row.mean_accuracy,
                "drop_vs_full": drops[row.label],
                "mean_frames": row.mean_frames,
            }
            for row in rows
        ],
    }


def render_ablation(rows: Sequence[AblationRow], seeds: Sequence[int], fmt: str) -> str:
    document = ablation_document(rows, seeds)
    if fmt == OutputFormat.STRUCTURED:
        return render_structured(document)
    table = [
        [
            r["config"],
            f"{r['mean_accuracy']:.4f}",
            f"{r['drop_vs_full']:.4f}",
            f"{r['mean_frames']:.1f}",
        ]
        for r in document["rows"]
    ]
    header = ("config", "mean_accuracy", "drop_vs_full", "mean_frames")
    if fmt == OutputFormat.TABLE:
        return _csv(header, table)
    lines = [f"{header[0]:<10} {header[1]:>14} {header[2]:>13} {header[3]:>12}"]
    lines += [f"{c:<10} {a:>14} {d:>13} {m:>12}" for c, a, d, m in table]
    return "\n".join(lines) + "\n"
