"""Tagged-tree encoding of the engine's value types.

Every registered dataclass encodes as ``{"type": "<ClassName>", <field>: <value>, ...}`` with
field names exactly as declared. Decoding dispatches on the tag and rebuilds nested values from
the declared field annotations, so ``decode(encode(x)) == x`` for every registered type.
"""

from __future__ import annotations

import dataclasses
import types
import typing
from enum import Enum
from typing import Any, TypeVar

from timeline_qa.core import types as core_types

T = TypeVar("T")

_REGISTRY: dict[str, type] = {}


def register(cls: type[T]) -> type[T]:
    if not dataclasses.is_dataclass(cls):
        raise TypeError(f"only dataclasses can be registered: {cls!r}")
    existing = _REGISTRY.get(cls.__name__)
    if existing is not None and existing is not cls:
        raise ValueError(f"type tag already registered: {cls.__name__}")
    _REGISTRY[cls.__name__] = cls
    return cls


def registered_tags() -> list[str]:
    return sorted(_REGISTRY)


for _cls in (
    core_types.VideoDescriptor,
    core_types.TemporalInterval,
    core_types.QueryOption,
    core_types.Query,
    core_types.ReasoningEpisode,
    core_types.Confidence,
    core_types.AgentAnswer,
    core_types.BudgetConfig,
    core_types.ValidationVerdict,
    core_types.PromptPair,
):
    register(_cls)


def encode(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        name = type(value).__name__
        if _REGISTRY.get(name) is not type(value):
            raise TypeError(f"unregistered type: {name}")
        tree: dict[str, Any] = {"type": name}
        for f in dataclasses.fields(value):
            tree[f.name] = encode(getattr(value, f.name))
        return tree
    if isinstance(value, (list, tuple)):
        return [encode(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted((encode(v) for v in value), key=repr)
    if isinstance(value, dict):
        return {str(k): encode(v) for k, v in value.items()}
    raise TypeError(f"cannot encode {type(value).__name__}")


def decode(tree: Any, expected: Any = None) -> Any:
    """Rebuild a value from its tagged tree.

    Without ``expected`` the tree must be a tagged object.
    """

    if expected is None:
        if not isinstance(tree, dict) or "type" not in tree:
            raise ValueError("tagged tree expected (object with a 'type' field)")
        return _decode_dataclass(tree)
    return _decode_as(tree, expected)


def _decode_dataclass(tree: dict[str, Any]) -> Any:
    tag = tree.get("type")
    cls = _REGISTRY.get(tag) if isinstance(tag, str) else None
    if cls is None:
        raise ValueError(f"unknown type tag: {tag!r}")
    hints = typing.get_type_hints(cls)
    kwargs: dict[str, Any] = {}
    for f in dataclasses.fields(cls):
        if f.name not in tree:
            if f.default is not dataclasses.MISSING or f.default_factory is not dataclasses.MISSING:
                continue
            raise ValueError(f"{tag}: missing field {f.name!r}")
        kwargs[f.name] = _decode_as(tree[f.name], hints[f.name])
    unknown = set(tree) - {"type"} - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ValueError(f"{tag}: unknown fields {sorted(unknown)}")
    return cls(**kwargs)


def _decode_as(value: Any, hint: Any) -> Any:
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)

    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        candidates = [a for a in args if a is not type(None)]
        last_error: Exception | None = None
        for candidate in candidates:
            try:
                return _decode_as(value, candidate)
            except (TypeError, ValueError) as exc:
                last_error = exc
        raise ValueError(f"value {value!r} matches none of {hint}") from last_error

    if origin is tuple:
        if not isinstance(value, list):
            raise ValueError(f"expected list for {hint}, got {type(value).__name__}")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_decode_as(v, args[0]) for v in value)
        if len(args) != len(value):
            raise ValueError(f"expected {len(args)} items for {hint}")
        return tuple(_decode_as(v, a) for v, a in zip(value, args))

    if origin is list:
        return [_decode_as(v, args[0]) for v in value]

    if origin in (frozenset, set):
        items = [_decode_as(v, args[0]) for v in value]
        return frozenset(items) if origin is frozenset else set(items)

    if origin is dict:
        return {k: _decode_as(v, args[1]) for k, v in value.items()}

    if hint is Any:
        return value
    if isinstance(hint, type):
        if issubclass(hint, Enum):
            return hint(value)
        if dataclasses.is_dataclass(hint):
            if not isinstance(value, dict) or value.get("type") != hint.__name__:
                raise ValueError(f"expected tagged {hint.__name__}, got {value!r}")
            return _decode_dataclass(value)
        if hint is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"expected number, got {value!r}")
            return float(value)
        if hint is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ValueError(f"expected integer, got {value!r}")
            return value
        if hint is bool:
            if not isinstance(value, bool):
                raise ValueError(f"expected boolean, got {value!r}")
            return value
        if hint is str:
            if not isinstance(value, str):
                raise ValueError(f"expected string, got {value!r}")
            return value
    raise TypeError(f"unsupported annotation: {hint!r}")
