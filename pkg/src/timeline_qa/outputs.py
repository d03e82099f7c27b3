"""Output directory layout and the artifact manifest."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from timeline_qa.determinism import canonical_json_bytes, file_size_bytes, sha256_file, write_bytes

OUT_ROOT_ENV = "QTR_OUT_ROOT"
DEFAULT_OUT_ROOT = Path("out") / "runs"

MANIFEST_VERSION = "timeline_qa_manifest_v1"
MANIFEST_NAME = "manifest.json"


def resolve_out_root(explicit: str | os.PathLike[str] | None = None) -> Path:
    """Output root: explicit path, else ``QTR_OUT_ROOT``, else ``out/runs``."""

    if explicit is not None:
        return Path(explicit)
    env_value = os.environ.get(OUT_ROOT_ENV)
    if env_value:
        return Path(env_value)
    return DEFAULT_OUT_ROOT


def sanitize_id(value: str) -> str:
    value = value.strip()
    if not value:
        raise ValueError("empty id")
    return re.sub(r"[^A-Za-z0-9._-]+", "_", value)


@dataclass(frozen=True)
class RunLayout:
    root: Path

    def question_dir(self, question_id: str) -> Path:
        return self.root / sanitize_id(question_id)

    def trace_path(self, question_id: str) -> Path:
        return self.question_dir(question_id) / "trace.ndjson"

    def graph_path(self, question_id: str) -> Path:
        return self.question_dir(question_id) / "graph.json"

    def report_path(self, name: str, suffix: str) -> Path:
        return self.root / f"{name}.{suffix}"

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME


def _content_type_for_path(path: Path) -> str | None:
    return {
        ".json": "application/json",
        ".ndjson": "application/x-ndjson",
        ".csv": "text/csv",
        ".html": "text/html",
        ".txt": "text/plain",
    }.get(path.suffix.lower())


def write_manifest(run_dir: Path, artifacts: Iterable[Path]) -> bytes:
    """Write ``manifest.json`` listing every artifact sorted by relpath; returns its bytes."""

    entries = []
    for artifact in artifacts:
        path = Path(artifact)
        relpath = path.relative_to(run_dir).as_posix()
        entry = {
            "relpath": relpath,
            "sha256": sha256_file(path),
            "size_bytes": file_size_bytes(path),
        }
        content_type = _content_type_for_path(path)
        if content_type:
            entry["content_type"] = content_type
        entries.append(entry)
    manifest = {
        "manifest_version": MANIFEST_VERSION,
        "artifacts": sorted(entries, key=lambda e: e["relpath"]),
    }
    data = canonical_json_bytes(manifest) + b"\n"
    write_bytes(run_dir / MANIFEST_NAME, data)
    return data
