"""Vision port over precomputed per-video frame embedding matrices.

A frame directory holds one ``<video_id>.npy`` matrix per video (one row per frame) and a
``manifest.json``::

    {"videos": {"<video_id>": {"file": "<video_id>.npy", "fps": 1.0,
                               "captions": [{"interval": [s, e], "text": "..."}]}}}

Producing the matrices is left to an external decoder; ``render_decode_command`` fills the
command template that the operator configures for it.
"""

from __future__ import annotations

import json
import logging
import shlex
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from timeline_qa.backends.ports import VisionPort
from timeline_qa.core.types import TemporalInterval, VideoDescriptor, format_seconds
from timeline_qa.errors import PortUnavailableError, UnknownVideoError

LOGGER = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

DECODE_PLACEHOLDERS = ("video", "fps", "out")


@dataclass(frozen=True)
class FrameCaption:
    interval: TemporalInterval
    text: str


@dataclass(frozen=True)
class FrameFileEntry:
    video_id: str
    path: Path
    fps: float
    captions: tuple[FrameCaption, ...] = ()


def load_frame_manifest(root: Path) -> dict[str, FrameFileEntry]:
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise PortUnavailableError(f"frame manifest not found: {manifest_path}")
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    entries: dict[str, FrameFileEntry] = {}
    for video_id, item in sorted(data.get("videos", {}).items()):
        captions = tuple(
            FrameCaption(
                TemporalInterval(float(c["interval"][0]), float(c["interval"][1])), c["text"]
            )
            for c in item.get("captions", [])
        )
        entries[video_id] = FrameFileEntry(
            video_id=video_id,
            path=root / item.get("file", f"{video_id}.npy"),
            fps=float(item.get("fps", 1.0)),
            captions=captions,
        )
    return entries


class FrameFileVision(VisionPort):
    """Serves ``embed`` by frame-index lookup; matrices are memory-mapped on first use."""

    def __init__(self, root: Path) -> None:
        self.root = Path(root)
        self.entries = load_frame_manifest(self.root)
        self._matrices: dict[str, np.ndarray] = {}
        self._lock = threading.Lock()

    def _entry(self, video_id: str) -> FrameFileEntry:
        try:
            return self.entries[video_id]
        except KeyError:
            raise UnknownVideoError(video_id) from None

    def _matrix(self, video_id: str) -> np.ndarray:
        with self._lock:
            matrix = self._matrices.get(video_id)
            if matrix is None:
                entry = self._entry(video_id)
                matrix = np.load(entry.path, mmap_mode="r")
                if matrix.ndim != 2 or matrix.shape[0] == 0:
                    raise PortUnavailableError(f"{entry.path} is not a non-empty frame matrix")
                LOGGER.debug("loaded %s frames x %s dims for %s", *matrix.shape, video_id)
                self._matrices[video_id] = matrix
            return matrix

    def descriptor(self, video_id: str) -> VideoDescriptor:
        entry = self._entry(video_id)
        frames = int(self._matrix(video_id).shape[0])
        return VideoDescriptor(
            id=video_id, duration_s=frames / entry.fps, fps=entry.fps, frame_count=frames
        )

    def embed(self, video_id: str, time_s: float) -> Sequence[float]:
        descriptor = self.descriptor(video_id)
        row = self._matrix(video_id)[descriptor.frame_index(time_s)]
        return [float(v) for v in row]

    def describe(self, video_id: str, interval: TemporalInterval) -> str:
        entry = self._entry(video_id)
        seen = [c.text for c in entry.captions if c.interval.intersection_length(interval) > 0]
        if seen:
            return "; ".join(seen)
        return (
            f"frames {format_seconds(interval.start_s)}-{format_seconds(interval.end_s)} s "
            f"of {video_id}"
        )

    def ping(self) -> None:
        for entry in self.entries.values():
            if not entry.path.is_file():
                raise PortUnavailableError(f"frame matrix missing: {entry.path}")


def render_decode_command(template: str, values: Mapping[str, Any]) -> list[str]:
    """Fill ``{video}``, ``{fps}`` and ``{out}`` in a decoder command template.

    Values are shell-quoted before substitution and the result is split into argv form.
    """

    missing = [
        name for name in DECODE_PLACEHOLDERS if f"{{{name}}}" in template and name not in values
    ]
    if missing:
        raise ValueError(f"decode template needs values for: {', '.join(missing)}")
    quoted = {k: shlex.quote(str(v)) for k, v in values.items()}
    return shlex.split(template.format(**quoted))
