"""Re-execute a recorded session against its own recorded port replies.

Replay checks every produced record against the recorded one at the same position, so a
successful replay reproduces the original result exactly.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import replace
from typing import Any, Sequence

from timeline_qa import ENGINE_TAG
from timeline_qa.backends.ports import LLMPort, Ports, VisionPort
from timeline_qa.controller.session import SessionConfig, SessionResult, run_session
from timeline_qa.controller.trace import RecordKind, SessionTrace, TraceRecord
from timeline_qa.core.codec import decode
from timeline_qa.core.types import Query, TemporalInterval, VideoDescriptor
from timeline_qa.determinism import canonical_json_bytes, json_safe
from timeline_qa.errors import (
    ReplayDivergenceError,
    TraceTruncatedError,
    VersionMismatchError,
)

LOGGER = logging.getLogger(__name__)


class _Tape:
    """Recorded port calls, consumed strictly in causal order."""

    def __init__(self, trace: SessionTrace) -> None:
        self._calls = trace.calls()
        self._next = 0
        self._lock = threading.Lock()
        self.checker: _RecordChecker | None = None

    def play(self, port: str, method: str, args: dict[str, Any]) -> Any:
        with self._lock:
            if self._next >= len(self._calls):
                position = self.checker.position if self.checker is not None else 0
                raise TraceTruncatedError(
                    f"#{position} (no recorded reply for {port}.{method})"
                )
            call = self._calls[self._next]
            self._next += 1
        if call["port"] != port or call["method"] != method or call["args"] != json_safe(args):
            raise ReplayDivergenceError(
                f"call {self._next - 1}: expected {call['port']}.{call['method']}, "
                f"got {port}.{method} with different arguments"
            )
        return call["result"]


class ReplayLLM(LLMPort):
    def __init__(self, tape: _Tape, metadata: dict[str, Any]) -> None:
        self.tape = tape
        self._metadata = metadata

    def complete(self, system: str, user: str) -> str:
        return str(self.tape.play("llm", "complete", {"system": system, "user": user}))

    def embed_text(self, text: str) -> Sequence[float]:
        return self.tape.play("llm", "embed_text", {"text": text})

    def metadata(self) -> dict[str, Any]:
        return dict(self._metadata)


class ReplayVision(VisionPort):
    """Frame embeds come from the evidence records; probes and descriptions from the tape."""

    def __init__(
        self,
        tape: _Tape,
        trace: SessionTrace,
        video: VideoDescriptor,
        metadata: dict[str, Any],
    ) -> None:
        self.tape = tape
        self.video = video
        self._metadata = metadata
        self._frames: dict[int, list[float]] = {}
        for record in trace.of_kind(RecordKind.EVIDENCE):
            for sample in record.payload["evidence"]["embedded"]:
                self._frames[int(sample["frame_index"])] = sample["embedding"]

    def embed(self, video_id: str, time_s: float) -> Sequence[float]:
        index = self.video.frame_index(time_s)
        try:
            return self._frames[index]
        except KeyError:
            raise TraceTruncatedError(f"evidence for frame {index} of {video_id}") from None

    def probe(self, video_id: str, time_s: float) -> Sequence[float]:
        return self.tape.play("vision", "probe", {"video_id": video_id, "time_s": time_s})

    def describe(self, video_id: str, interval: TemporalInterval) -> str:
        return str(
            self.tape.play(
                "vision",
                "describe",
                {"video_id": video_id, "interval": [interval.start_s, interval.end_s]},
            )
        )

    def metadata(self) -> dict[str, Any]:
        return dict(self._metadata)


class _RecordChecker:
    """Replayed clock plus positional comparison of produced records."""

    def __init__(self, trace: SessionTrace) -> None:
        self.recorded = trace.records
        self.position = 0

    def clock(self) -> int:
        if self.position >= len(self.recorded):
            raise TraceTruncatedError(f"#{self.position} (record past the end of the trace)")
        return self.recorded[self.position].wall_ms

    def check(self, record: TraceRecord) -> None:
        expected = self.recorded[self.position]
        if canonical_json_bytes(record.to_dict()) != canonical_json_bytes(expected.to_dict()):
            raise ReplayDivergenceError(
                f"record {expected.label(self.position)} differs from the replayed "
                f"{record.label(self.position)}"
            )
        self.position += 1


class _CheckedTrace(SessionTrace):
    def __init__(self, checker: _RecordChecker) -> None:
        super().__init__()
        self.checker = checker

    def append(self, record: TraceRecord) -> None:
        self.checker.check(record)
        super().append(record)


def _truncation_label(trace: SessionTrace) -> str | None:
    """Label of the first record a complete trace would have but this one lacks."""

    if not trace.records:
        return "#0 iteration 0 header"
    last = trace.records[-1]
    if last.kind is RecordKind.TERMINATION:
        return None
    return f"#{len(trace.records)} following iteration {last.iteration} {last.kind.value}"


def replay_session(trace: SessionTrace) -> SessionResult:
    """Re-run the recorded session with recorded replies; raises on any divergence."""

    if not trace.records:
        raise TraceTruncatedError("#0 iteration 0 header")
    header = trace.header
    tag = trace.engine_tag
    if tag != ENGINE_TAG:
        raise VersionMismatchError(f"trace engine {tag!r} does not match {ENGINE_TAG!r}")

    query: Query = decode(header.payload["query"])
    video: VideoDescriptor = decode(header.payload["video"])
    cfg: SessionConfig = decode(header.payload["config"])
    ports_meta = header.payload.get("ports", {})

    checker = _RecordChecker(trace)
    tape = _Tape(trace)
    tape.checker = checker
    ports = Ports(
        llm=ReplayLLM(tape, ports_meta.get("llm", {})),
        vision=ReplayVision(tape, trace, video, ports_meta.get("vision", {})),
    )

    try:
        result = run_session(
            query, video, cfg, ports, clock=checker.clock, trace=_CheckedTrace(checker)
        )
    except TraceTruncatedError:
        missing = _truncation_label(trace)
        if missing is not None:
            raise TraceTruncatedError(missing) from None
        raise

    if checker.position != len(trace.records):
        raise ReplayDivergenceError(
            f"replay produced {checker.position} records, trace holds {len(trace.records)}"
        )
    LOGGER.info("replay matched %d records", checker.position)
    return replace(result, trace=SessionTrace(records=list(result.trace.records)))
