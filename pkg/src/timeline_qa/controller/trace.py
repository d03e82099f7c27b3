"""Session traces: one structured record per step, newline-delimited on disk.

Record kinds, in the order a session emits them per iteration: ``proposal``, ``validation``,
``evidence``, ``answer``, ``alignment``, ``memory-update``; the session opens with a ``header``
record (iteration 0, engine tag) and closes with ``termination``.

Port calls other than frame embeds are captured by the recording proxies below and stored in
the ``calls`` list of the record of the step that made them. Frame embeds are stored inside
the evidence record.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence

from timeline_qa.backends.ports import LLMPort, VisionPort, call_record
from timeline_qa.core.types import TemporalInterval
from timeline_qa.determinism import canonical_hash, json_safe, read_ndjson, write_ndjson


class RecordKind(str, Enum):
    HEADER = "header"
    PROPOSAL = "proposal"
    VALIDATION = "validation"
    EVIDENCE = "evidence"
    ANSWER = "answer"
    ALIGNMENT = "alignment"
    MEMORY_UPDATE = "memory-update"
    TERMINATION = "termination"


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    kind: RecordKind
    payload: dict[str, Any]
    wall_ms: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "kind": self.kind.value,
            "payload": self.payload,
            "wall_ms": self.wall_ms,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TraceRecord:
        return cls(
            iteration=int(data["iteration"]),
            kind=RecordKind(data["kind"]),
            payload=dict(data["payload"]),
            wall_ms=int(data["wall_ms"]),
        )

    def label(self, position: int) -> str:
        return f"#{position} iteration {self.iteration} {self.kind.value}"


def hashable_view(record: TraceRecord) -> dict[str, Any]:
    """Record content without wall-clock time."""

    view = record.to_dict()
    view.pop("wall_ms")
    return view


@dataclass
class SessionTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    @property
    def header(self) -> TraceRecord:
        if not self.records or self.records[0].kind is not RecordKind.HEADER:
            raise ValueError("trace has no header record")
        return self.records[0]

    @property
    def engine_tag(self) -> str:
        return str(self.header.payload.get("engine", ""))

    def of_kind(self, kind: RecordKind) -> list[TraceRecord]:
        return [r for r in self.records if r.kind is kind]

    def calls(self) -> list[dict[str, Any]]:
        return [c for r in self.records for c in r.payload.get("calls", [])]

    def trace_hash(self) -> str:
        return canonical_hash([hashable_view(r) for r in self.records])

    def write(self, path: Path) -> None:
        write_ndjson(path, [r.to_dict() for r in self.records])

    @classmethod
    def read(cls, path: Path) -> SessionTrace:
        return cls(records=[TraceRecord.from_dict(d) for d in read_ndjson(path)])


def elapsed_ms_clock(now: Callable[[], float] = time.perf_counter) -> Callable[[], int]:
    """Milliseconds since the clock was created."""

    start = now()
    return lambda: int(round((now() - start) * 1000.0))


class TraceWriter:
    """Appends records to a trace, stamping each with the session clock."""

    def __init__(self, trace: SessionTrace, clock: Callable[[], int]) -> None:
        self.trace = trace
        self.clock = clock

    def emit(
        self,
        iteration: int,
        kind: RecordKind,
        payload: dict[str, Any],
        calls: Sequence[dict[str, Any]] = (),
    ) -> TraceRecord:
        body = dict(payload)
        if calls:
            body["calls"] = list(calls)
        record = TraceRecord(
            iteration=iteration, kind=kind, payload=json_safe(body), wall_ms=self.clock()
        )
        self.trace.append(record)
        return record


class CallLog:
    """Calls made through the recording proxies since the last drain."""

    def __init__(self) -> None:
        self._calls: list[dict[str, Any]] = []
        self._lock = threading.Lock()

    def add(self, entry: dict[str, Any]) -> None:
        with self._lock:
            self._calls.append(json_safe(entry))

    def drain(self) -> list[dict[str, Any]]:
        with self._lock:
            calls, self._calls = self._calls, []
        return calls


class RecordingLLM(LLMPort):
    def __init__(self, inner: LLMPort, log: CallLog) -> None:
        self.inner = inner
        self.log = log

    def complete(self, system: str, user: str) -> str:
        reply = self.inner.complete(system, user)
        self.log.add(call_record("llm", "complete", {"system": system, "user": user}, reply))
        return reply

    def embed_text(self, text: str) -> Sequence[float]:
        vector = [float(v) for v in self.inner.embed_text(text)]
        self.log.add(call_record("llm", "embed_text", {"text": text}, vector))
        return vector

    def ping(self) -> None:
        self.inner.ping()


class RecordingVision(VisionPort):
    """Records ``probe`` and ``describe``; ``embed`` passes through unrecorded."""

    def __init__(self, inner: VisionPort, log: CallLog) -> None:
        self.inner = inner
        self.log = log

    def embed(self, video_id: str, time_s: float) -> Sequence[float]:
        return self.inner.embed(video_id, time_s)

    def probe(self, video_id: str, time_s: float) -> Sequence[float]:
        vector = [float(v) for v in self.inner.probe(video_id, time_s)]
        self.log.add(
            call_record("vision", "probe", {"video_id": video_id, "time_s": time_s}, vector)
        )
        return vector

    def describe(self, video_id: str, interval: TemporalInterval) -> str:
        text = self.inner.describe(video_id, interval)
        self.log.add(
            call_record(
                "vision",
                "describe",
                {"video_id": video_id, "interval": [interval.start_s, interval.end_s]},
                text,
            )
        )
        return text

    def ping(self) -> None:
        self.inner.ping()
