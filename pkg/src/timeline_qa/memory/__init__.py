from __future__ import annotations

from timeline_qa.memory.graph import (
    EdgeRelation,
    EventEdge,
    EventGraph,
    EventNode,
    Finding,
    graph_violations,
    render_memory_digest,
    retrieve_context,
    update_graph,
)

__all__ = [
    "EdgeRelation",
    "EventEdge",
    "EventGraph",
    "EventNode",
    "Finding",
    "graph_violations",
    "render_memory_digest",
    "retrieve_context",
    "update_graph",
]
