"""Per-session event graph.

Nodes are event hypotheses anchored to intervals; edges carry temporal (before/after/overlaps)
and causal relations with confidences in [0, 1]. Every update returns a new graph value; the
graph held by a session is replaced, never mutated.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from timeline_qa.consistency.refiner import RefinementDelta
from timeline_qa.core.codec import register
from timeline_qa.core.types import TemporalInterval, Vector, format_seconds, freeze_vector

SQRT2 = math.sqrt(2.0)

DEFAULT_MERGE_THRESHOLD = 0.3
DEFAULT_PROPAGATION_LAMBDA = 0.5
CAUSAL_CONFIDENCE = 0.5
MIN_EDGE_WEIGHT = 0.25

_WORD = re.compile(r"[a-z0-9]+")
_CAUSAL_MARKERS = re.compile(r"\b(because|so that|in order to)\b", re.IGNORECASE)


class EdgeRelation(str, Enum):
    BEFORE = "before"
    AFTER = "after"
    OVERLAPS = "overlaps"
    CAUSAL = "causal"


TEMPORAL_RELATIONS = (EdgeRelation.BEFORE, EdgeRelation.AFTER, EdgeRelation.OVERLAPS)


@register
@dataclass(frozen=True)
class EventNode:
    id: str
    anchor: TemporalInterval
    summary: str
    embedding: Vector
    support_count: int
    created_iteration: int


@register
@dataclass(frozen=True)
class EventEdge:
    from_id: str
    to_id: str
    relation: EdgeRelation
    confidence: float

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.from_id, self.to_id, self.relation.value)


@register
@dataclass(frozen=True)
class EventGraph:
    nodes: tuple[EventNode, ...] = ()
    edges: tuple[EventEdge, ...] = ()
    iteration: int = 0

    @classmethod
    def empty(cls) -> EventGraph:
        return cls()

    def node(self, node_id: str) -> EventNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    def chronological(self) -> list[EventNode]:
        return sorted(self.nodes, key=lambda n: (n.anchor.start_s, n.anchor.end_s, n.id))


@register
@dataclass(frozen=True)
class Finding:
    """What one iteration contributes to memory: the grounded interval and the agent's account."""

    interval: TemporalInterval
    summary: str
    embedding: Vector
    reason: str
    iteration: int


def _node_id(ordinal: int) -> str:
    return f"n{ordinal:04d}"


def _overlap_fraction(a: TemporalInterval, b: TemporalInterval) -> float:
    shorter = min(a.length, b.length)
    if shorter <= 0:
        return 0.0
    return a.intersection_length(b) / shorter


def _merge(node: EventNode, finding: Finding) -> EventNode:
    parts = [p for p in node.summary.split("; ") if p]
    summary = node.summary if finding.summary in parts else "; ".join(parts + [finding.summary])
    old = np.asarray(node.embedding, dtype=np.float64)
    new = np.asarray(finding.embedding, dtype=np.float64)
    # Incremental mean keeps an identical finding from perturbing the embedding.
    embedding = old + (new - old) / (node.support_count + 1)
    return replace(
        node,
        anchor=node.anchor.union(finding.interval),
        summary=summary,
        embedding=freeze_vector(embedding),
        support_count=node.support_count + 1,
    )


def temporal_edges(
    nodes: Sequence[EventNode], previous: Iterable[EventEdge] = ()
) -> list[EventEdge]:
    """Before/after/overlaps edges implied by the anchors; surviving edges keep their confidence."""

    kept = {e.key: e.confidence for e in previous}
    out: list[EventEdge] = []

    def add(a: str, b: str, relation: EdgeRelation) -> None:
        out.append(EventEdge(a, b, relation, kept.get((a, b, relation.value), 1.0)))

    ordered = sorted(nodes, key=lambda n: n.id)
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            if a.anchor.end_s <= b.anchor.start_s:
                add(a.id, b.id, EdgeRelation.BEFORE)
                add(b.id, a.id, EdgeRelation.AFTER)
            elif b.anchor.end_s <= a.anchor.start_s:
                add(b.id, a.id, EdgeRelation.BEFORE)
                add(a.id, b.id, EdgeRelation.AFTER)
            if a.anchor.intersection_length(b.anchor) > 0:
                add(a.id, b.id, EdgeRelation.OVERLAPS)
    return out


def _words(text: str) -> set[str]:
    return {w for w in _WORD.findall(text.lower()) if len(w) >= 4}


def _best_match(text: str, nodes: Sequence[EventNode]) -> EventNode | None:
    words = _words(text)
    best: EventNode | None = None
    best_key: tuple[int, float, str] | None = None
    for n in nodes:
        shared = len(words & _words(n.summary))
        if shared == 0:
            continue
        key = (-shared, n.anchor.start_s, n.id)
        if best_key is None or key < best_key:
            best, best_key = n, key
    return best


def causal_pair(reason: str, nodes: Sequence[EventNode]) -> tuple[str, str] | None:
    """(cause, effect) node ids stated by a reason sentence, if it links two distinct nodes."""

    match = _CAUSAL_MARKERS.search(reason)
    if match is None:
        return None
    left, right = reason[: match.start()], reason[match.end() :]
    if match.group(1).lower() == "because":
        cause_text, effect_text = right, left
    else:
        cause_text, effect_text = left, right
    cause = _best_match(cause_text, nodes)
    effect = _best_match(effect_text, nodes)
    if cause is None or effect is None or cause.id == effect.id:
        return None
    return cause.id, effect.id


def edge_weight(loss_contribution: float) -> float:
    return min(max(1.0 - loss_contribution / SQRT2, MIN_EDGE_WEIGHT), 1.0)


def update_graph(
    graph: EventGraph,
    finding: Finding,
    delta: RefinementDelta | None = None,
    *,
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD,
) -> EventGraph:
    """Merge or insert the finding, recompute temporal edges and re-weight the touched node.

    Edges touching the merged or inserted node are scaled by the consistency weight of
    ``delta``; without a delta they keep their confidence.
    """

    best: EventNode | None = None
    best_fraction = -1.0
    for n in sorted(graph.nodes, key=lambda n: n.id):
        fraction = _overlap_fraction(n.anchor, finding.interval)
        if fraction >= merge_threshold and fraction > best_fraction:
            best, best_fraction = n, fraction

    if best is not None:
        touched = _merge(best, finding)
        nodes = [touched if n.id == best.id else n for n in graph.nodes]
    else:
        touched = EventNode(
            id=_node_id(len(graph.nodes) + 1),
            anchor=finding.interval,
            summary=finding.summary,
            embedding=finding.embedding,
            support_count=1,
            created_iteration=finding.iteration,
        )
        nodes = list(graph.nodes) + [touched]

    edges = temporal_edges(nodes, graph.edges)
    causal = {e.key: e for e in graph.edges if e.relation is EdgeRelation.CAUSAL}
    pair = causal_pair(finding.reason, nodes)
    if pair is not None:
        key = (pair[0], pair[1], EdgeRelation.CAUSAL.value)
        causal.setdefault(key, EventEdge(pair[0], pair[1], EdgeRelation.CAUSAL, CAUSAL_CONFIDENCE))
    edges.extend(causal.values())

    w = edge_weight(delta.loss_contribution) if delta is not None else 1.0
    reweighted = []
    for e in edges:
        if touched.id in (e.from_id, e.to_id):
            e = replace(e, confidence=min(max(e.confidence * w, 0.0), 1.0))
        reweighted.append(e)

    return EventGraph(
        nodes=tuple(sorted(nodes, key=lambda n: n.id)),
        edges=tuple(sorted(reweighted, key=lambda e: e.key)),
        iteration=graph.iteration + 1,
    )


def _cosine_or_zero(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def retrieve_context(
    graph: EventGraph,
    query_embedding: Sequence[float],
    k: int,
    *,
    propagation_lambda: float = DEFAULT_PROPAGATION_LAMBDA,
) -> list[EventNode]:
    """Top-k nodes by cosine score after one round of propagation over neighbouring edges."""

    if k < 1:
        raise ValueError("k must be positive")
    if not graph.nodes:
        return []
    q = np.asarray(query_embedding, dtype=np.float64)
    base = {
        n.id: _cosine_or_zero(q, np.asarray(n.embedding, dtype=np.float64)) for n in graph.nodes
    }
    weights: dict[tuple[str, str], float] = {}
    for e in graph.edges:
        for a, b in ((e.from_id, e.to_id), (e.to_id, e.from_id)):
            weights[(a, b)] = max(weights.get((a, b), 0.0), e.confidence)
    scored = []
    for n in graph.nodes:
        spread = sum(w * base[b] for (a, b), w in weights.items() if a == n.id)
        scored.append((base[n.id] + propagation_lambda * spread, n))
    scored.sort(key=lambda item: (-item[0], item[1].anchor.start_s, item[1].id))
    return [n for _, n in scored[:k]]


def render_memory_digest(graph: EventGraph, max_chars: int) -> str:
    """Chronological "[s–e] summary (support n)" lines, cut at a whole entry."""

    lines: list[str] = []
    used = 0
    for n in graph.chronological():
        line = (
            f"[{format_seconds(n.anchor.start_s)}–{format_seconds(n.anchor.end_s)}] "
            f"{n.summary} (support {n.support_count})"
        )
        extra = len(line) + (1 if lines else 0)
        if used + extra > max_chars:
            break
        lines.append(line)
        used += extra
    return "\n".join(lines)


def graph_violations(graph: EventGraph) -> list[str]:
    """Every broken structural rule, empty when the graph is consistent."""

    problems: list[str] = []
    by_id = {n.id: n for n in graph.nodes}
    seen: set[tuple[str, str, str]] = set()
    for e in graph.edges:
        if e.key in seen:
            problems.append(f"duplicate edge {e.key}")
        seen.add(e.key)
        if e.from_id not in by_id or e.to_id not in by_id:
            problems.append(f"dangling edge {e.key}")
            continue
        if not 0.0 <= e.confidence <= 1.0:
            problems.append(f"confidence out of range on {e.key}")
        a, b = by_id[e.from_id].anchor, by_id[e.to_id].anchor
        if e.relation is EdgeRelation.BEFORE and not a.end_s <= b.start_s:
            problems.append(f"before edge contradicts anchors {e.key}")
        if e.relation is EdgeRelation.AFTER and not b.end_s <= a.start_s:
            problems.append(f"after edge contradicts anchors {e.key}")
        if e.relation is EdgeRelation.OVERLAPS and not a.intersection_length(b) > 0:
            problems.append(f"overlaps edge without intersection {e.key}")
    for e in graph.edges:
        if e.relation is EdgeRelation.BEFORE:
            inverse = (e.to_id, e.from_id, EdgeRelation.AFTER.value)
            if inverse not in seen:
                problems.append(f"before edge without stored inverse {e.key}")
    return problems
