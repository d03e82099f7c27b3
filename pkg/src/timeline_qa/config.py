"""Session configuration from a JSON document plus environment overrides.

Precedence: CLI flags, then the config file, then built-in defaults. Every key of the
document is optional; see ``schemas/config/session_config_v1.schema.json``.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Mapping

from timeline_qa.backends.remote import EndpointConfig
from timeline_qa.controller.session import Ablation, SessionConfig
from timeline_qa.core.types import BudgetConfig
from timeline_qa.validate import validate_session_config

WORKERS_ENV = "QTR_WORKERS"
LOG_LEVEL_ENV = "QTR_LOG_LEVEL"
DEFAULT_LOG_LEVEL = "WARNING"

_BUDGET_KEYS = ("max_iterations", "max_segment_s", "max_total_frames", "retry_limit")
_SESSION_KEYS = (
    "seed",
    "stop_band",
    "budget_k",
    "aggregation",
    "merge_threshold",
    "propagation_lambda",
    "digest_max_chars",
    "embed_workers",
    "tokens_per_frame",
    "projector_path",
)


def _env_int(name: str) -> int | None:
    value = os.environ.get(name, "").strip()
    if not value:
        return None
    try:
        return int(value)
    except ValueError:
        return None


def resolve_workers(explicit: int | None = None) -> int:
    """Suite pool size: explicit value, ``QTR_WORKERS``, else the logical CPU count."""

    if explicit is not None:
        return max(1, explicit)
    env_value = _env_int(WORKERS_ENV)
    if env_value is not None:
        return max(1, env_value)
    return max(1, os.cpu_count() or 1)


def resolve_log_level(explicit: str | None = None) -> str:
    if explicit:
        return explicit.upper()
    return (os.environ.get(LOG_LEVEL_ENV, "").strip() or DEFAULT_LOG_LEVEL).upper()


def load_config_document(path: str | os.PathLike[str] | None) -> dict[str, Any]:
    if path is None:
        return {}
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    validate_session_config(doc)
    return doc


def session_config_from_mapping(
    doc: Mapping[str, Any],
    *,
    seed: int | None = None,
    ablation: list[str] | None = None,
) -> SessionConfig:
    budget = BudgetConfig(**{k: doc[k] for k in _BUDGET_KEYS if k in doc})
    kwargs: dict[str, Any] = {k: doc[k] for k in _SESSION_KEYS if k in doc}
    if seed is not None:
        kwargs["seed"] = seed
    chosen = ablation if ablation else doc.get("ablation", [])
    return SessionConfig(
        budget=budget,
        ablation=tuple(Ablation(a) for a in chosen),
        **kwargs,
    )


def load_session_config(
    path: str | os.PathLike[str] | None = None,
    *,
    seed: int | None = None,
    ablation: list[str] | None = None,
) -> SessionConfig:
    return session_config_from_mapping(load_config_document(path), seed=seed, ablation=ablation)


def endpoint_config(doc: Mapping[str, Any]) -> EndpointConfig | None:
    endpoint = doc.get("endpoint")
    if not endpoint:
        return None
    return EndpointConfig.from_mapping(endpoint)
