from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Any, Sequence

from timeline_qa.core.types import TemporalInterval


class LLMPort:
    """Language-model backend: chat completion plus text embedding."""

    def complete(self, system: str, user: str) -> str:
        raise NotImplementedError

    def embed_text(self, text: str) -> Sequence[float]:
        raise NotImplementedError

    def ping(self) -> None:
        """Raise PortUnavailableError when the backend cannot serve requests."""


class VisionPort:
    """Frame-level perception backend.

    ``embed`` serves perception frames, ``probe`` serves coarse timeline thumbnails for
    consistency scoring, ``describe`` renders a clip for the answering prompt.
    """

    def embed(self, video_id: str, time_s: float) -> Sequence[float]:
        raise NotImplementedError

    def probe(self, video_id: str, time_s: float) -> Sequence[float]:
        return self.embed(video_id, time_s)

    def describe(self, video_id: str, interval: TemporalInterval) -> str:
        raise NotImplementedError

    def ping(self) -> None:
        """Raise PortUnavailableError when the backend cannot serve requests."""


@dataclass(frozen=True)
class Ports:
    llm: LLMPort
    vision: VisionPort


class CountingVisionPort(VisionPort):
    """Pass-through vision port that counts every call by kind."""

    def __init__(self, inner: VisionPort) -> None:
        self.inner = inner
        self._lock = threading.Lock()
        self.embed_calls = 0
        self.probe_calls = 0
        self.describe_calls = 0

    def embed(self, video_id: str, time_s: float) -> Sequence[float]:
        with self._lock:
            self.embed_calls += 1
        return self.inner.embed(video_id, time_s)

    def probe(self, video_id: str, time_s: float) -> Sequence[float]:
        with self._lock:
            self.probe_calls += 1
        return self.inner.probe(video_id, time_s)

    def describe(self, video_id: str, interval: TemporalInterval) -> str:
        with self._lock:
            self.describe_calls += 1
        return self.inner.describe(video_id, interval)

    def ping(self) -> None:
        self.inner.ping()


def call_record(port: str, method: str, args: dict[str, Any], result: Any) -> dict[str, Any]:
    return {"port": port, "method": method, "args": args, "result": result}
