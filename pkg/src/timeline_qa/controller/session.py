"""The iterative question-answering loop.

Each iteration plans an episode, grounds it, asks the answer agent, scores temporal
consistency and folds the finding into the event graph. The loop stops on a confident answer
or when a budget trips; the best answer seen so far is returned.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable

import numpy as np

from timeline_qa import ENGINE_TAG
from timeline_qa.backends.ports import LLMPort, Ports, VisionPort
from timeline_qa.consistency.refiner import (
    RefinementDelta,
    TimelineFeatures,
    alignment_distribution,
    bin_of_time,
    bin_width_for_cap,
    make_refinement_delta,
    tcr_loss,
)
from timeline_qa.controller.answering import AnswerOutcome, ask_answer_agent, build_answer_prompt
from timeline_qa.controller.trace import (
    CallLog,
    RecordingLLM,
    RecordingVision,
    RecordKind,
    SessionTrace,
    TraceWriter,
    elapsed_ms_clock,
)
from timeline_qa.core.codec import encode, register
from timeline_qa.core.types import (
    AgentAnswer,
    BudgetConfig,
    ConfidenceBand,
    EpisodeOrigin,
    Query,
    ReasoningEpisode,
    TemporalInterval,
    VideoDescriptor,
)
from timeline_qa.core.validation import validate_interval
from timeline_qa.errors import PortError, RetriesExhaustedError, SessionAbortedError
from timeline_qa.errors import UndefinedMeasureError
from timeline_qa.memory.graph import (
    DEFAULT_MERGE_THRESHOLD,
    DEFAULT_PROPAGATION_LAMBDA,
    EventGraph,
    Finding,
    render_memory_digest,
    retrieve_context,
    update_graph,
)
from timeline_qa.perception.grounding import Evidence, FrameCache, ground_segment
from timeline_qa.perception.projection import AggregationMode, Projector
from timeline_qa.planner.rtp import (
    PlannerState,
    fallback_window,
    plan_next_episode,
    random_window,
    synthesize_intent,
)

LOGGER = logging.getLogger(__name__)


class Ablation(str, Enum):
    NO_RTP = "no-rtp"
    NO_TM = "no-tm"
    NO_TCR = "no-tcr"


class TerminationReason(str, Enum):
    HIGH_CONFIDENCE = "high-confidence"
    ITERATION_BUDGET = "iteration-budget"
    FRAME_BUDGET = "frame-budget"
    FALLBACK_EXHAUSTED = "retries-exhausted-fallback-exhausted"


@register
@dataclass(frozen=True)
class SessionConfig:
    budget: BudgetConfig = field(default_factory=BudgetConfig)
    ablation: tuple[Ablation, ...] = ()
    seed: int = 0
    stop_band: ConfidenceBand = ConfidenceBand.HIGH
    budget_k: int = 16
    aggregation: AggregationMode = AggregationMode.MEAN
    merge_threshold: float = DEFAULT_MERGE_THRESHOLD
    propagation_lambda: float = DEFAULT_PROPAGATION_LAMBDA
    digest_max_chars: int = 2000
    embed_workers: int = 4
    tokens_per_frame: int = 1
    projector_path: str | None = None

    def __post_init__(self) -> None:
        normalized = tuple(sorted({Ablation(a) for a in self.ablation}, key=lambda a: a.value))
        object.__setattr__(self, "ablation", normalized)
        object.__setattr__(self, "stop_band", ConfidenceBand(self.stop_band))
        object.__setattr__(self, "aggregation", AggregationMode(self.aggregation))
        if self.stop_band is ConfidenceBand.LOW:
            raise ValueError("stop_band must be medium or high")
        if self.budget_k < 2:
            raise ValueError("budget_k must be at least 2")
        if self.embed_workers < 1:
            raise ValueError("embed_workers must be positive")
        if self.digest_max_chars < 1:
            raise ValueError("digest_max_chars must be positive")
        if self.tokens_per_frame < 1:
            raise ValueError("tokens_per_frame must be positive")

    def has(self, ablation: Ablation) -> bool:
        return ablation in self.ablation

    @property
    def label(self) -> str:
        return "+".join(a.value for a in self.ablation) or "full"


@dataclass(frozen=True)
class SessionResult:
    final: AgentAnswer
    iterations_used: int
    total_frames: int
    probe_frames: int
    trace: SessionTrace
    terminated_by: TerminationReason
    answer_interval: TemporalInterval
    graph: EventGraph
    episodes: tuple[ReasoningEpisode, ...] = ()


def build_projector(cfg: SessionConfig, dimension: int) -> tuple[Projector, dict[str, Any]]:
    if cfg.projector_path:
        proj = Projector.load(Path(cfg.projector_path))
        source: dict[str, Any] = {"source": "file", "path": cfg.projector_path}
    else:
        proj = Projector.seeded(dimension, seed=cfg.seed)
        source = {"source": "seeded", "seed": cfg.seed}
    digest = hashlib.sha256(
        np.ascontiguousarray(proj.w1).tobytes() + np.ascontiguousarray(proj.w2).tobytes()
    ).hexdigest()
    source.update({"sha256": digest, "input_dim": proj.input_dim, "output_dim": proj.output_dim})
    return proj, source


def _port_metadata(port: object) -> dict[str, Any]:
    meta = getattr(port, "metadata", None)
    if callable(meta):
        return dict(meta())
    inner = getattr(port, "inner", None)
    if inner is not None:
        return _port_metadata(inner)
    return {"kind": type(port).__name__}


def best_answer(outcomes: list[tuple[int, AgentAnswer]]) -> tuple[int, AgentAnswer]:
    """Highest confidence wins; ties go to the latest iteration."""

    return max(outcomes, key=lambda item: (item[1].confidence.score, item[0]))


class _Session:
    def __init__(
        self,
        query: Query,
        video: VideoDescriptor,
        cfg: SessionConfig,
        ports: Ports,
        clock: Callable[[], int],
        trace: SessionTrace,
    ) -> None:
        self.query = query
        self.video = video
        self.cfg = cfg
        self.budget = cfg.budget
        self.calls = CallLog()
        self.llm: LLMPort = RecordingLLM(ports.llm, self.calls)
        self.vision: VisionPort = RecordingVision(ports.vision, self.calls)
        self.raw_ports = ports
        self.trace = trace
        self.writer = TraceWriter(self.trace, clock)
        self.cache = FrameCache()
        self.rng = np.random.default_rng(cfg.seed)
        self.state = PlannerState(query=query)
        self.graph = EventGraph.empty()
        self.features: TimelineFeatures | None = None
        self.distributions: list[tuple[float, ...]] = []
        self.planned_bins: list[int] = []
        self.answers: list[tuple[int, AgentAnswer]] = []
        self.episodes: list[ReasoningEpisode] = []
        self.total_frames = 0
        self.query_embedding: np.ndarray | None = None
        self.projector: Projector | None = None

    # -- steps ---------------------------------------------------------------------------

    def open(self) -> None:
        self.raw_ports.llm.ping()
        self.raw_ports.vision.ping()
        self.query_embedding = np.asarray(self.llm.embed_text(self.query.formatted()))
        self.projector, projector_meta = build_projector(self.cfg, int(self.query_embedding.size))
        self.writer.emit(
            0,
            RecordKind.HEADER,
            {
                "engine": ENGINE_TAG,
                "query": encode(self.query),
                "video": encode(self.video),
                "config": encode(self.cfg),
                "projector": projector_meta,
                "ports": {
                    "llm": _port_metadata(self.raw_ports.llm),
                    "vision": _port_metadata(self.raw_ports.vision),
                },
            },
            self.calls.drain(),
        )

    def plan(self, iteration: int) -> ReasoningEpisode | None:
        if self.cfg.has(Ablation.NO_RTP):
            interval = random_window(self.video, self.state.reviewed, self.budget, self.rng)
            episode = ReasoningEpisode(
                iteration=iteration,
                intent=synthesize_intent(interval, self.query),
                interval=interval,
                origin=EpisodeOrigin.RANDOM_ABLATION,
            )
            self.writer.emit(
                iteration, RecordKind.PROPOSAL, {"mode": "random", "episode": encode(episode)}
            )
            verdict = validate_interval(interval, self.video, self.state.reviewed, self.budget)
            self.writer.emit(iteration, RecordKind.VALIDATION, {"verdict": encode(verdict)})
            return episode

        try:
            planned = plan_next_episode(self.state, self.video, self.budget, self.llm, iteration)
        except RetriesExhaustedError as exc:
            self.writer.emit(
                iteration,
                RecordKind.PROPOSAL,
                {
                    "mode": "planner",
                    "exhausted": {"attempts": exc.attempts, "reason": exc.last_reason},
                },
                self.calls.drain(),
            )
            window = fallback_window(self.video, self.state.reviewed, self.budget)
            self.writer.emit(
                iteration,
                RecordKind.VALIDATION,
                {
                    "rejected_replies": list(exc.replies),
                    "last_reason": exc.last_reason,
                    "fallback": encode(window),
                },
            )
            if window is None:
                LOGGER.warning(
                    "iteration %d: planner exhausted and no fallback window left", iteration
                )
                return None
            LOGGER.warning(
                "iteration %d: planner exhausted, falling back to %s", iteration, window.render()
            )
            return ReasoningEpisode(
                iteration=iteration,
                intent=synthesize_intent(window, self.query),
                interval=window,
                origin=EpisodeOrigin.FALLBACK,
            )

        self.state = planned.state
        self.writer.emit(
            iteration,
            RecordKind.PROPOSAL,
            {
                "mode": "planner",
                "proposal": encode(planned.proposal),
                "episode": encode(planned.episode),
            },
            self.calls.drain(),
        )
        self.writer.emit(
            iteration,
            RecordKind.VALIDATION,
            {
                "rejections": encode(planned.proposal.rejections),
                "accepted": encode(planned.proposal.interval),
                "origin": planned.episode.origin.value,
            },
        )
        return planned.episode

    def ground(self, episode: ReasoningEpisode) -> Evidence:
        assert self.projector is not None
        allowance = self.budget.max_total_frames + self.cfg.budget_k - self.total_frames
        evidence = ground_segment(
            episode,
            self.video,
            self.vision,
            self.projector,
            self.cfg.budget_k,
            aggregation=self.cfg.aggregation,
            cache=self.cache,
            frame_allowance=allowance,
            workers=self.cfg.embed_workers,
        )
        self.total_frames += evidence.frame_cost
        self.writer.emit(
            episode.iteration,
            RecordKind.EVIDENCE,
            {"evidence": encode(evidence), "total_frames": self.total_frames},
            self.calls.drain(),
        )
        return evidence

    def answer(self, evidence: Evidence) -> AnswerOutcome:
        prompt = build_answer_prompt(self.query, self.state.memory_digest, evidence)
        outcome = ask_answer_agent(prompt, evidence, self.llm, self.budget.retry_limit)
        self.writer.emit(
            evidence.episode.iteration,
            RecordKind.ANSWER,
            {
                "attempts": encode(outcome.attempts),
                "answer": encode(outcome.answer),
                "synthesized": outcome.synthesized,
            },
            self.calls.drain(),
        )
        return outcome

    def align(self, episode: ReasoningEpisode) -> RefinementDelta | None:
        width = bin_width_for_cap(self.budget.max_segment_s)
        if self.features is None:
            self.features = TimelineFeatures(self.video, width, self.vision.probe)
        try:
            intent_embedding = self.llm.embed_text(episode.intent)
            alignment = alignment_distribution(
                intent_embedding, self.features.features(), bin_width_s=width
            )
        except UndefinedMeasureError as exc:
            LOGGER.warning("iteration %d: alignment skipped (%s)", episode.iteration, exc)
            self.writer.emit(
                episode.iteration, RecordKind.ALIGNMENT, {"skipped": str(exc)}, self.calls.drain()
            )
            return None
        delta = make_refinement_delta(alignment, episode.interval, self.video)
        planned_bin = bin_of_time(episode.interval.center, width, alignment.bin_count)
        self.distributions.append(alignment.distribution)
        self.planned_bins.append(planned_bin)
        running = tcr_loss(self.distributions, self.planned_bins)
        self.writer.emit(
            episode.iteration,
            RecordKind.ALIGNMENT,
            {
                "alignment": encode(alignment),
                "delta": encode(delta),
                "planned_bin": planned_bin,
                "loss_term": delta.loss_contribution,
                "running_loss": running,
            },
            self.calls.drain(),
        )
        return delta

    def memorize(
        self,
        episode: ReasoningEpisode,
        evidence: Evidence,
        answer: AgentAnswer,
        delta: RefinementDelta | None,
    ) -> None:
        finding = Finding(
            interval=episode.interval,
            summary=answer.summary,
            embedding=evidence.centroid,
            reason=answer.reason,
            iteration=episode.iteration,
        )
        self.graph = update_graph(
            self.graph, finding, delta, merge_threshold=self.cfg.merge_threshold
        )
        digest = render_memory_digest(self.graph, self.cfg.digest_max_chars)
        self.state = self.state.with_digest(digest)
        self.writer.emit(
            episode.iteration,
            RecordKind.MEMORY_UPDATE,
            {"graph": encode(self.graph), "digest": digest},
        )

    def answer_interval(self, final_iteration: int) -> TemporalInterval:
        if self.graph.nodes and self.query_embedding is not None:
            top = retrieve_context(
                self.graph,
                self.query_embedding,
                1,
                propagation_lambda=self.cfg.propagation_lambda,
            )
            return top[0].anchor
        return next(e.interval for e in self.episodes if e.iteration == final_iteration)

    # -- loop ----------------------------------------------------------------------------

    def run(self) -> SessionResult:
        self.open()
        LOGGER.info(
            "session start video=%s duration=%.1fs config=%s",
            self.video.id,
            self.video.duration_s,
            self.cfg.label,
        )
        terminated_by = TerminationReason.ITERATION_BUDGET
        iteration = 0
        for iteration in range(1, self.budget.max_iterations + 1):
            if self.total_frames >= self.budget.max_total_frames:
                terminated_by = TerminationReason.FRAME_BUDGET
                iteration -= 1
                break
            episode = self.plan(iteration)
            if episode is None:
                terminated_by = TerminationReason.FALLBACK_EXHAUSTED
                iteration -= 1
                break
            self.episodes.append(episode)
            evidence = self.ground(episode)
            outcome = self.answer(evidence)
            answer = outcome.answer
            self.answers.append((iteration, answer))
            LOGGER.debug(
                "iteration %d: %s %s confidence=%d frames=%d",
                iteration,
                episode.origin.value,
                episode.interval.render(),
                answer.confidence.score,
                evidence.frame_cost,
            )
            self.state = self.state.with_reviewed(
                episode.interval, irrelevant=answer.confidence.band is ConfidenceBand.LOW
            )
            delta = None if self.cfg.has(Ablation.NO_TCR) else self.align(episode)
            if not self.cfg.has(Ablation.NO_TM):
                self.memorize(episode, evidence, answer, delta)
            if not self.cfg.has(Ablation.NO_RTP):
                self.state = self.state.with_feedback(delta)
            if answer.confidence.band.rank >= self.cfg.stop_band.rank:
                terminated_by = TerminationReason.HIGH_CONFIDENCE
                break

        if not self.answers:
            raise SessionAbortedError("session produced no answer", trace=self.trace)
        final_iteration, final = best_answer(self.answers)
        answer_interval = self.answer_interval(final_iteration)
        probe_frames = self.features.probe_count if self.features is not None else 0
        self.writer.emit(
            iteration,
            RecordKind.TERMINATION,
            {
                "terminated_by": terminated_by.value,
                "final": encode(final),
                "final_iteration": final_iteration,
                "answer_interval": encode(answer_interval),
                "iterations_used": len(self.answers),
                "total_frames": self.total_frames,
                "probe_frames": probe_frames,
            },
            self.calls.drain(),
        )
        LOGGER.info(
            "session done video=%s terminated_by=%s iterations=%d frames=%d confidence=%d",
            self.video.id,
            terminated_by.value,
            len(self.answers),
            self.total_frames,
            final.confidence.score,
        )
        return SessionResult(
            final=final,
            iterations_used=len(self.answers),
            total_frames=self.total_frames,
            probe_frames=probe_frames,
            trace=self.trace,
            terminated_by=terminated_by,
            answer_interval=answer_interval,
            graph=self.graph,
            episodes=tuple(self.episodes),
        )


def run_session(
    query: Query,
    video: VideoDescriptor,
    cfg: SessionConfig,
    ports: Ports,
    *,
    clock: Callable[[], int] | None = None,
    trace: SessionTrace | None = None,
) -> SessionResult:
    """Run one question to termination.

    A port failure aborts the session with ``SessionAbortedError`` carrying the partial trace.
    """

    session = _Session(
        query,
        video,
        cfg,
        ports,
        clock or elapsed_ms_clock(),
        trace if trace is not None else SessionTrace(),
    )
    try:
        return session.run()
    except PortError as exc:
        LOGGER.warning("session aborted on port failure: %s", exc)
        raise SessionAbortedError(
            f"port failure: {exc}", trace=session.trace, cause=exc
        ) from exc
