from __future__ import annotations

import json

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis.stateful import (
    RuleBasedStateMachine,
    initialize,
    invariant,
    precondition,
    rule,
    run_state_machine_as_test,
)

from timeline_qa.consistency.refiner import RefinementDelta
from timeline_qa.core.codec import decode, encode
from timeline_qa.core.types import TemporalInterval
from timeline_qa.determinism import canonical_json_bytes
from timeline_qa.memory.graph import (
    EdgeRelation,
    EventEdge,
    EventGraph,
    EventNode,
    Finding,
    causal_pair,
    edge_weight,
    graph_violations,
    render_memory_digest,
    retrieve_context,
    update_graph,
)

WORDS = ("kettle", "door", "window", "ladder", "bicycle", "candle")


def _axis(i: int, dim: int = 4) -> tuple[float, ...]:
    return tuple(1.0 if j == i else 0.0 for j in range(dim))


def _finding(
    start: float,
    end: float,
    summary: str = "something moves",
    *,
    embedding: tuple[float, ...] = (1.0, 0.0),
    reason: str = "",
    iteration: int = 1,
) -> Finding:
    return Finding(TemporalInterval(start, end), summary, embedding, reason, iteration)


def _relations(graph: EventGraph) -> set[tuple[str, str, str]]:
    return {e.key for e in graph.edges}


def test_first_finding_creates_single_node() -> None:
    graph = update_graph(EventGraph.empty(), _finding(240, 380))
    assert [n.id for n in graph.nodes] == ["n0001"]
    assert graph.edges == ()
    assert graph.iteration == 1


def test_disjoint_findings_get_before_and_after_edges() -> None:
    graph = update_graph(EventGraph.empty(), _finding(80, 240, "dog narrative"))
    graph = update_graph(graph, _finding(240, 380, "cat narrative", iteration=2))
    assert len(graph.nodes) == 2
    assert _relations(graph) == {("n0001", "n0002", "before"), ("n0002", "n0001", "after")}
    assert graph_violations(graph) == []


def test_overlapping_finding_merges() -> None:
    graph = update_graph(EventGraph.empty(), _finding(100, 200, "a pot boils"))
    graph = update_graph(graph, _finding(150, 250, "steam rises", iteration=2))
    assert len(graph.nodes) == 1
    node = graph.nodes[0]
    assert node.anchor == TemporalInterval(100, 250)
    assert node.support_count == 2
    assert node.summary == "a pot boils; steam rises"
    assert node.created_iteration == 1


def test_small_overlap_inserts_with_overlaps_edge() -> None:
    graph = update_graph(EventGraph.empty(), _finding(0, 100))
    graph = update_graph(graph, _finding(90, 200))
    assert len(graph.nodes) == 2
    assert ("n0001", "n0002", "overlaps") in _relations(graph)


def test_reason_sentence_adds_causal_edge() -> None:
    graph = update_graph(EventGraph.empty(), _finding(80, 120, "a storm knocks down the fence"))
    graph = update_graph(
        graph,
        _finding(
            300,
            400,
            "workers repair the broken fence",
            reason="workers repair the fence because a storm knocked it down",
            iteration=2,
        ),
    )
    causal = [e for e in graph.edges if e.relation is EdgeRelation.CAUSAL]
    assert causal == [EventEdge("n0001", "n0002", EdgeRelation.CAUSAL, 0.5)]


def test_causal_pair_needs_two_distinct_nodes() -> None:
    node = EventNode("n0001", TemporalInterval(0, 10), "a storm hits", (1.0,), 1, 1)
    assert causal_pair("the storm hits because of the storm", [node]) is None
    assert causal_pair("no marker in this sentence", [node]) is None


def test_consistency_weight_scales_touched_edges() -> None:
    graph = update_graph(EventGraph.empty(), _finding(0, 10))
    delta = RefinementDelta(suggested_center_s=25.0, scale=0.5, loss_contribution=2 ** 0.5 / 2)
    graph = update_graph(graph, _finding(20, 30), delta)
    assert len(graph.edges) == 2
    assert all(e.confidence == pytest.approx(0.5) for e in graph.edges)
    assert edge_weight(0.0) == 1.0
    assert edge_weight(2 ** 0.5) == 0.25


def test_update_is_idempotent_on_node_set() -> None:
    finding = _finding(100, 200, "a pot boils")
    once = update_graph(EventGraph.empty(), finding)
    twice = update_graph(once, finding)
    assert [n.id for n in twice.nodes] == [n.id for n in once.nodes]
    assert twice.nodes[0].support_count == once.nodes[0].support_count + 1
    assert twice.nodes[0].embedding == once.nodes[0].embedding
    assert twice.nodes[0].summary == once.nodes[0].summary


def _manual_graph() -> EventGraph:
    a = EventNode("n0001", TemporalInterval(0, 10), "a", _axis(0, 3), 1, 1)
    b = EventNode("n0002", TemporalInterval(20, 30), "b", _axis(1, 3), 1, 2)
    c = EventNode("n0003", TemporalInterval(12, 18), "c", _axis(1, 3), 1, 3)
    edges = (
        EventEdge("n0001", "n0002", EdgeRelation.BEFORE, 1.0),
        EventEdge("n0002", "n0001", EdgeRelation.AFTER, 1.0),
    )
    return EventGraph(nodes=(a, b, c), edges=edges, iteration=3)


def test_retrieval_propagates_along_edges() -> None:
    graph = _manual_graph()
    query = _axis(0, 3)
    assert [n.id for n in retrieve_context(graph, query, 3)] == ["n0001", "n0002", "n0003"]
    plain = retrieve_context(graph, query, 3, propagation_lambda=0.0)
    assert [n.id for n in plain] == ["n0001", "n0003", "n0002"]
    assert [n.id for n in retrieve_context(graph, query, 1)] == ["n0001"]


def test_retrieval_edge_cases() -> None:
    assert retrieve_context(EventGraph.empty(), (1.0, 0.0), 3) == []
    single = update_graph(EventGraph.empty(), _finding(0, 10))
    assert retrieve_context(single, (0.0, 1.0), 5) == list(single.nodes)
    with pytest.raises(ValueError):
        retrieve_context(single, (1.0, 0.0), 0)


def test_retrieval_without_propagation_is_plain_cosine() -> None:
    rng = np.random.default_rng(21)
    graph = EventGraph.empty()
    for _ in range(12):
        start = float(rng.uniform(0, 900))
        graph = update_graph(
            graph,
            _finding(start, start + float(rng.uniform(5, 60)), embedding=tuple(rng.normal(size=4))),
        )
    query = rng.normal(size=4)

    def cosine(n: EventNode) -> float:
        e = np.asarray(n.embedding, dtype=np.float64)
        return float(np.dot(query, e) / (float(np.linalg.norm(query)) * float(np.linalg.norm(e))))

    expected = sorted(graph.nodes, key=lambda n: (-cosine(n), n.anchor.start_s, n.id))[:4]
    assert retrieve_context(graph, query, 4, propagation_lambda=0.0) == expected


def test_memory_digest() -> None:
    assert render_memory_digest(EventGraph.empty(), 2000) == ""
    graph = update_graph(EventGraph.empty(), _finding(80, 240, "dog narrative"))
    assert render_memory_digest(graph, 2000) == "[80–240] dog narrative (support 1)"

    two = update_graph(EventGraph.empty(), _finding(20, 30, "second"))
    two = update_graph(two, _finding(0, 10, "first"))
    assert render_memory_digest(two, 51) == (
        "[0–10] first (support 1)\n[20–30] second (support 1)"
    )
    assert render_memory_digest(two, 50) == "[0–10] first (support 1)"
    assert render_memory_digest(two, 10) == ""


def test_graph_round_trips_through_json() -> None:
    graph = update_graph(EventGraph.empty(), _finding(80, 120, "a storm knocks down the fence"))
    graph = update_graph(
        graph,
        _finding(300, 400, "workers repair the fence", reason="repair because storm knocked"),
    )
    tree = json.loads(canonical_json_bytes(encode(graph)))
    assert decode(tree) == graph
    assert [n["id"] for n in tree["nodes"]] == sorted(n["id"] for n in tree["nodes"])


def test_graph_violations_detects_contradictions() -> None:
    a = EventNode("n0001", TemporalInterval(0, 10), "a", (1.0,), 1, 1)
    b = EventNode("n0002", TemporalInterval(5, 30), "b", (1.0,), 1, 1)
    bad = EventGraph(
        nodes=(a, b),
        edges=(
            EventEdge("n0001", "n0002", EdgeRelation.BEFORE, 1.0),
            EventEdge("n0001", "n0009", EdgeRelation.OVERLAPS, 0.5),
        ),
    )
    problems = graph_violations(bad)
    assert any("contradicts" in p for p in problems)
    assert any("dangling" in p for p in problems)
    assert any("without stored inverse" in p for p in problems)


class EventGraphMachine(RuleBasedStateMachine):
    @initialize()
    def start(self) -> None:
        self.graph = EventGraph.empty()
        self.applied = 0
        self.last: Finding | None = None

    @rule(
        start=st.integers(min_value=0, max_value=900),
        length=st.integers(min_value=1, max_value=100),
        word=st.sampled_from(WORDS),
        other=st.sampled_from(WORDS),
        axis=st.integers(min_value=0, max_value=3),
        loss=st.none() | st.floats(min_value=0.0, max_value=1.4, allow_nan=False),
    )
    def add_finding(
        self, start: int, length: int, word: str, other: str, axis: int, loss: float | None
    ) -> None:
        finding = Finding(
            interval=TemporalInterval(float(start), float(start + length)),
            summary=f"the {word} moves",
            embedding=_axis(axis),
            reason=f"the {word} moves because the {other} fell",
            iteration=self.applied + 1,
        )
        delta = None
        if loss is not None:
            delta = RefinementDelta(float(start), 1.0, loss)
        self.graph = update_graph(self.graph, finding, delta)
        self.applied += 1
        self.last = finding

    @precondition(lambda self: self.last is not None)
    @rule()
    def repeat_last_finding(self) -> None:
        assert self.last is not None
        ids_before = [n.id for n in self.graph.nodes]
        support_before = sum(n.support_count for n in self.graph.nodes)
        self.graph = update_graph(self.graph, self.last)
        self.applied += 1
        assert [n.id for n in self.graph.nodes] == ids_before
        assert sum(n.support_count for n in self.graph.nodes) == support_before + 1

    @invariant()
    def structurally_consistent(self) -> None:
        assert graph_violations(self.graph) == []
        assert self.graph.iteration == self.applied
        assert sum(n.support_count for n in self.graph.nodes) == self.applied
        ids = [n.id for n in self.graph.nodes]
        assert ids == sorted(ids)
        assert all(n.anchor.within(0.0, 1000.0) for n in self.graph.nodes)

    @invariant()
    def survives_serialization(self) -> None:
        assert decode(encode(self.graph)) == self.graph


def test_event_graph_state_machine() -> None:
    run_state_machine_as_test(
        EventGraphMachine,
        settings=settings(
            max_examples=500,
            stateful_step_count=10,
            deadline=None,
            suppress_health_check=list(HealthCheck),
        ),
    )
