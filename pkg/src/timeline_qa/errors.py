from __future__ import annotations

from typing import Any


class ParseError(ValueError):
    """A backend reply could not be parsed; always retriable by reprompting."""

    def __init__(self, reason: str, message: str, *, field: str | None = None) -> None:
        super().__init__(message)
        self.reason = reason
        self.field = field


class UndefinedMeasureError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


class BinIndexError(IndexError):
    pass


class UnknownVideoError(KeyError):
    pass


class RetriesExhaustedError(RuntimeError):
    def __init__(self, attempts: int, last_reason: str, replies: tuple[str, ...] = ()) -> None:
        super().__init__(f"retries exhausted after {attempts} attempts (last: {last_reason})")
        self.attempts = attempts
        self.last_reason = last_reason
        self.replies = replies


class PortError(RuntimeError):
    """A backend port call failed."""

    def __init__(self, message: str, *, request_id: str | None = None) -> None:
        super().__init__(message)
        self.request_id = request_id


class HttpStatusError(PortError):
    def __init__(self, status_code: int, *, request_id: str | None = None) -> None:
        super().__init__(f"http-status({status_code})", request_id=request_id)
        self.status_code = status_code


class RemoteTimeoutError(PortError):
    pass


class MalformedResponseError(PortError):
    pass


class PortUnavailableError(PortError):
    pass


class SessionAbortedError(RuntimeError):
    def __init__(self, message: str, *, trace: Any, cause: BaseException | None = None) -> None:
        super().__init__(message)
        self.trace = trace
        self.cause = cause


class ReplayError(RuntimeError):
    pass


class VersionMismatchError(ReplayError):
    pass


class TraceTruncatedError(ReplayError):
    def __init__(self, missing: str) -> None:
        super().__init__(f"trace truncated: first missing record is {missing}")
        self.missing = missing


class ReplayDivergenceError(ReplayError):
    pass
