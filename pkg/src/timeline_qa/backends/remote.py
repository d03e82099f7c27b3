"""Chat-completion backends over HTTP.

Requests use the common ``/chat/completions`` and ``/embeddings`` shapes. Transport errors,
timeouts and retryable status codes are retried with exponential backoff; jitter comes from a
seeded generator so the schedule is reproducible. Credentials are read from the environment
only and never logged.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import httpx
import numpy as np

from timeline_qa.backends.ports import LLMPort, VisionPort
from timeline_qa.core.types import TemporalInterval, format_seconds
from timeline_qa.errors import (
    HttpStatusError,
    MalformedResponseError,
    PortUnavailableError,
    RemoteTimeoutError,
)

LOGGER = logging.getLogger(__name__)

RETRYABLE_STATUS_CODES = {408, 425, 429, 500, 502, 503, 504}
DEFAULT_API_KEY_ENV = "QTR_API_KEY"
REDACTED = "[REDACTED]"
DESCRIBE_INSTRUCTION = "Describe events in this clip"


@dataclass(frozen=True)
class JsonReply:
    request_id: str
    body: Any


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    embedding_model: str | None = None
    temperature: float = 0.0
    timeout_ms: int = 30_000
    retry_limit: int = 3
    api_key_env: str = DEFAULT_API_KEY_ENV
    vision_base_url: str | None = None
    base_delay_s: float = 0.2
    max_delay_s: float = 2.0

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> EndpointConfig:
        return cls(
            base_url=str(data["base_url"]).rstrip("/"),
            model=str(data["model"]),
            embedding_model=data.get("embedding_model"),
            temperature=float(data.get("temperature", 0.0)),
            timeout_ms=int(data.get("timeout_ms", 30_000)),
            retry_limit=int(data.get("retry_limit", 3)),
            api_key_env=str(data.get("api_key_env", DEFAULT_API_KEY_ENV)),
            vision_base_url=data.get("vision_base_url"),
        )


def redact_headers(headers: Mapping[str, str]) -> dict[str, str]:
    return {
        k: (REDACTED if k.lower() in {"authorization", "x-api-key"} else v)
        for k, v in headers.items()
    }


class HttpJsonClient:
    """POSTs JSON with bounded, seeded-jitter retries. Safe to share between threads."""

    def __init__(
        self,
        config: EndpointConfig,
        *,
        base_url: str | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        seed: int = 0,
        environ: Mapping[str, str] | None = None,
    ) -> None:
        env = os.environ if environ is None else environ
        api_key = env.get(config.api_key_env, "").strip()
        if not api_key:
            raise PortUnavailableError(
                f"credential environment variable {config.api_key_env} is not set"
            )
        self.config = config
        self.base_url = (base_url or config.base_url).rstrip("/")
        self._headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        self._client = httpx.Client(
            timeout=httpx.Timeout(config.timeout_ms / 1000.0),
            transport=transport,
        )
        self._sleep = sleep
        self._rng = np.random.default_rng(seed)
        self._lock = threading.Lock()
        self._counter = 0
        self.attempt_log: list[dict[str, Any]] = []

    def metadata(self) -> dict[str, Any]:
        return {
            "kind": "remote",
            "base_url": self.base_url,
            "model": self.config.model,
            "headers": redact_headers(self._headers),
        }

    def _next_request_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"qtr-{self._counter:06d}"

    def backoff_delay(self, attempt: int) -> float:
        delay = min(self.config.max_delay_s, self.config.base_delay_s * (2 ** (attempt - 1)))
        with self._lock:
            jitter = float(self._rng.uniform(0.0, delay / 2.0))
        return delay + jitter

    def post(self, path: str, payload: Mapping[str, Any]) -> JsonReply:
        request_id = self._next_request_id()
        url = f"{self.base_url}{path}"
        headers = dict(self._headers, **{"X-Request-Id": request_id})
        limit = max(1, self.config.retry_limit)
        for attempt in range(1, limit + 1):
            failure: Exception
            try:
                response = self._client.post(url, json=payload, headers=headers)
            except httpx.TimeoutException:
                failure = RemoteTimeoutError(
                    f"request timed out after {self.config.timeout_ms} ms", request_id=request_id
                )
            except httpx.TransportError as exc:
                failure = PortUnavailableError(
                    f"transport error: {type(exc).__name__}", request_id=request_id
                )
            else:
                self.attempt_log.append(
                    {"request_id": request_id, "attempt": attempt, "status": response.status_code}
                )
                if response.status_code < 400:
                    try:
                        return JsonReply(request_id, response.json())
                    except ValueError as exc:
                        raise MalformedResponseError(
                            "response body is not JSON", request_id=request_id
                        ) from exc
                failure = HttpStatusError(response.status_code, request_id=request_id)
                if response.status_code not in RETRYABLE_STATUS_CODES:
                    raise failure
            if attempt >= limit:
                raise failure
            delay = self.backoff_delay(attempt)
            LOGGER.warning(
                "request %s attempt %d/%d failed (%s); retrying in %.2fs",
                request_id,
                attempt,
                limit,
                failure,
                delay,
            )
            self._sleep(delay)
        raise AssertionError("unreachable")

    def close(self) -> None:
        self._client.close()


def _first_choice_text(reply: JsonReply) -> str:
    request_id = reply.request_id
    try:
        content = reply.body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise MalformedResponseError(
            "missing choices[0].message.content", request_id=request_id
        ) from exc
    if not isinstance(content, str):
        raise MalformedResponseError("message content is not text", request_id=request_id)
    return content


def _embedding(reply: JsonReply) -> list[float]:
    try:
        vector = reply.body["data"][0]["embedding"]
        return [float(v) for v in vector]
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise MalformedResponseError(
            "missing data[0].embedding", request_id=reply.request_id
        ) from exc


def remote_complete(client: HttpJsonClient, system: str, user: str) -> str:
    """One chat-completion request; returns the first choice's text."""

    reply = client.post(
        "/chat/completions",
        {
            "model": client.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": client.config.temperature,
        },
    )
    return _first_choice_text(reply)


class RemoteLLM(LLMPort):
    def __init__(self, client: HttpJsonClient) -> None:
        self.client = client

    def complete(self, system: str, user: str) -> str:
        return remote_complete(self.client, system, user)

    def embed_text(self, text: str) -> Sequence[float]:
        reply = self.client.post(
            "/embeddings",
            {
                "model": self.client.config.embedding_model or self.client.config.model,
                "input": text,
            },
        )
        return _embedding(reply)

    def ping(self) -> None:
        if not self.client.base_url:
            raise PortUnavailableError("no base_url configured")

    def metadata(self) -> dict[str, Any]:
        return self.client.metadata()


def clip_reference(video_id: str, interval: TemporalInterval) -> str:
    start, end = format_seconds(interval.start_s), format_seconds(interval.end_s)
    return f"clip://{video_id}?start={start}&end={end}"


class RemoteVision(VisionPort):
    """Frame embeddings from ``POST /frames/embed``; clip descriptions via chat completion."""

    def __init__(self, client: HttpJsonClient) -> None:
        self.client = client

    def embed(self, video_id: str, time_s: float) -> Sequence[float]:
        reply = self.client.post("/frames/embed", {"video_id": video_id, "time_s": time_s})
        try:
            return [float(v) for v in reply.body["embedding"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedResponseError(
                "missing embedding in frame response", request_id=reply.request_id
            ) from exc

    def describe(self, video_id: str, interval: TemporalInterval) -> str:
        return remote_complete(
            self.client, DESCRIBE_INSTRUCTION, clip_reference(video_id, interval)
        )

    def ping(self) -> None:
        if not self.client.base_url:
            raise PortUnavailableError("no vision base_url configured")

    def metadata(self) -> dict[str, Any]:
        return self.client.metadata()
