"""Suite execution: one session per question, graded and aggregated in question order."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Sequence

from timeline_qa import ENGINE_TAG
from timeline_qa.backends.ports import CountingVisionPort, Ports
from timeline_qa.backends.scripted import scripted_ports
from timeline_qa.backends.world import ScriptedWorld
from timeline_qa.controller.session import Ablation, SessionConfig, run_session
from timeline_qa.core.codec import encode
from timeline_qa.core.types import TemporalInterval, format_seconds
from timeline_qa.determinism import write_json
from timeline_qa.harness.grading import grade
from timeline_qa.harness.oracle import OracleResult, brute_force_oracle
from timeline_qa.harness.suite import ScriptedSuite, SuiteQuestion
from timeline_qa.outputs import RunLayout

LOGGER = logging.getLogger(__name__)

REPORT_VERSION = "timeline_qa_run_report_v1"

# Uniform-sampling frame budgets the engine's cost is compared against.
BASELINE_BUDGETS = (8, 32, 64, 100, 512, 1024, 2048)

# Videos at least this long must never cost more frames than the exhaustive scan.
ORACLE_COST_MIN_DURATION_S = 1200.0

ABLATION_ROWS: tuple[tuple[Ablation, ...], ...] = (
    (),
    (Ablation.NO_TM,),
    (Ablation.NO_TCR,),
    (Ablation.NO_RTP,),
)

PortsFactory = Callable[[ScriptedWorld], Ports]


@dataclass(frozen=True)
class QuestionOutcome:
    question_id: str
    world_id: str
    video_id: str
    duration_s: float
    fps: float
    mode: str
    gold_answer: str
    correct: bool = False
    answer: str | None = None
    frames: int = 0
    probe_frames: int = 0
    iterations: int = 0
    terminated_by: str | None = None
    confidence: int | None = None
    answer_interval: TemporalInterval | None = None
    visual_tokens: int = 0
    embed_calls: int | None = None
    trace_hash: str | None = None
    oracle: OracleResult | None = None
    error: str | None = None

    @property
    def token_saving(self) -> float:
        return 1.0 - self.frames / (self.duration_s * self.fps)

    @property
    def oracle_overlap(self) -> bool:
        if self.oracle is None or self.answer_interval is None:
            return False
        return self.answer_interval.intersection_length(self.oracle.answer_interval) > 0.0

    def to_dict(self) -> dict[str, Any]:
        oracle = None
        if self.oracle is not None:
            oracle = dict(self.oracle.to_dict(), overlap=self.oracle_overlap)
        interval = self.answer_interval
        return {
            "question_id": self.question_id,
            "world_id": self.world_id,
            "video_id": self.video_id,
            "duration_s": self.duration_s,
            "mode": self.mode,
            "correct": self.correct,
            "answer": self.answer,
            "gold_answer": self.gold_answer,
            "frames": self.frames,
            "probe_frames": self.probe_frames,
            "iterations": self.iterations,
            "terminated_by": self.terminated_by,
            "confidence": self.confidence,
            "answer_interval": None if interval is None else [interval.start_s, interval.end_s],
            "visual_tokens": self.visual_tokens,
            "token_saving": self.token_saving,
            "embed_calls": self.embed_calls,
            "trace_hash": self.trace_hash,
            "oracle": oracle,
            "error": self.error,
        }


@dataclass
class RunReport:
    config: str
    seed: int
    questions: list[QuestionOutcome] = field(default_factory=list)

    @property
    def failures(self) -> list[QuestionOutcome]:
        return [q for q in self.questions if q.error is not None]

    @property
    def accuracy(self) -> float:
        if not self.questions:
            return 0.0
        return sum(1 for q in self.questions if q.correct) / len(self.questions)

    @property
    def mean_frames(self) -> float:
        if not self.questions:
            return 0.0
        return sum(q.frames for q in self.questions) / len(self.questions)

    def frame_fraction_by_duration(self) -> dict[str, float]:
        out = {}
        for key, group in _by_duration(self.questions).items():
            mean_frames = sum(q.frames for q in group) / len(group)
            out[key] = mean_frames / (group[0].duration_s * group[0].fps)
        return out

    def accuracy_by_duration(self) -> dict[str, float]:
        return {k: _accuracy(g) for k, g in _by_duration(self.questions).items()}

    def accuracy_by_mode(self) -> dict[str, float]:
        groups: dict[str, list[QuestionOutcome]] = {}
        for q in self.questions:
            groups.setdefault(q.mode, []).append(q)
        return {mode: _accuracy(groups[mode]) for mode in sorted(groups)}

    def baseline_frame_ratios(self) -> dict[str, float]:
        return {str(b): self.mean_frames / b for b in BASELINE_BUDGETS}

    def oracle_agreement(self) -> dict[str, Any]:
        comparable = [
            q for q in self.questions if q.oracle is not None and q.oracle.found and q.error is None
        ]
        agreeing = sum(1 for q in comparable if q.oracle_overlap)
        within = all(
            q.frames <= q.oracle.frames_scanned
            for q in self.questions
            if q.oracle is not None and q.duration_s >= ORACLE_COST_MIN_DURATION_S
        )
        return {
            "comparable": len(comparable),
            "agreeing": agreeing,
            "rate": agreeing / len(comparable) if comparable else None,
            "frames_within_oracle": within,
        }

    def aggregates(self) -> dict[str, Any]:
        return {
            "question_count": len(self.questions),
            "failures": len(self.failures),
            "accuracy": self.accuracy,
            "mean_frames": self.mean_frames,
            "frame_fraction_by_duration": self.frame_fraction_by_duration(),
            "accuracy_by_duration": self.accuracy_by_duration(),
            "accuracy_by_mode": self.accuracy_by_mode(),
            "baseline_frame_ratios": self.baseline_frame_ratios(),
            "oracle_agreement": self.oracle_agreement(),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "report_version": REPORT_VERSION,
            "engine": ENGINE_TAG,
            "config": self.config,
            "seed": self.seed,
            "questions": [q.to_dict() for q in self.questions],
            "aggregates": self.aggregates(),
        }


def _accuracy(group: Sequence[QuestionOutcome]) -> float:
    return sum(1 for q in group if q.correct) / len(group)


def _by_duration(questions: Iterable[QuestionOutcome]) -> dict[str, list[QuestionOutcome]]:
    groups: dict[float, list[QuestionOutcome]] = {}
    for q in questions:
        groups.setdefault(q.duration_s, []).append(q)
    return {format_seconds(d): groups[d] for d in sorted(groups)}


def run_question(
    suite: ScriptedSuite,
    question: SuiteQuestion,
    cfg: SessionConfig,
    ports_factory: PortsFactory = scripted_ports,
    *,
    layout: RunLayout | None = None,
    with_oracle: bool = True,
) -> QuestionOutcome:
    """Run one question; any failure is recorded on the outcome instead of raised."""

    world = suite.world(question.world_id)
    video = world.descriptor(question.video_id)
    base = QuestionOutcome(
        question_id=question.question_id,
        world_id=question.world_id,
        video_id=question.video_id,
        duration_s=video.duration_s,
        fps=video.fps,
        mode=question.mode_label,
        gold_answer=question.gold_answer,
    )
    oracle = None
    if with_oracle:
        oracle = brute_force_oracle(
            world, question, cap_s=cfg.budget.max_segment_s, budget_k=cfg.budget_k
        )

    try:
        ports = ports_factory(world)
        counted = CountingVisionPort(ports.vision)
        result = run_session(
            question.query(video), video, cfg, Ports(llm=ports.llm, vision=counted)
        )
    except Exception as exc:  # noqa: BLE001
        LOGGER.warning("question %s failed: %s", question.question_id, exc)
        partial = getattr(exc, "trace", None)
        if layout is not None and partial is not None:
            partial.write(layout.trace_path(question.question_id))
        return replace(base, oracle=oracle, error=f"{type(exc).__name__}: {exc}")

    if layout is not None:
        result.trace.write(layout.trace_path(question.question_id))
        write_json(layout.graph_path(question.question_id), encode(result.graph))

    answer = result.final.answer
    return replace(
        base,
        correct=grade(answer, question.gold_answer, question.options),
        answer=answer,
        frames=result.total_frames,
        probe_frames=result.probe_frames,
        iterations=result.iterations_used,
        terminated_by=result.terminated_by.value,
        confidence=result.final.confidence.score,
        answer_interval=result.answer_interval,
        visual_tokens=result.total_frames * cfg.tokens_per_frame,
        embed_calls=counted.embed_calls,
        trace_hash=result.trace.trace_hash(),
        oracle=oracle,
    )


def run_suite(
    suite: ScriptedSuite,
    cfg: SessionConfig,
    ports_factory: PortsFactory = scripted_ports,
    *,
    workers: int = 1,
    layout: RunLayout | None = None,
    with_oracle: bool = True,
) -> RunReport:
    """Run every question in a bounded pool; outcomes keep suite order."""

    def one(question: SuiteQuestion) -> QuestionOutcome:
        return run_question(
            suite, question, cfg, ports_factory, layout=layout, with_oracle=with_oracle
        )

    if workers <= 1 or len(suite) <= 1:
        outcomes = [one(q) for q in suite]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, suite.questions))
    report = RunReport(config=cfg.label, seed=cfg.seed, questions=outcomes)
    LOGGER.info(
        "suite done config=%s questions=%d accuracy=%.3f mean_frames=%.1f failures=%d",
        report.config,
        len(outcomes),
        report.accuracy,
        report.mean_frames,
        len(report.failures),
    )
    return report


def stretch_suite(suite: ScriptedSuite, duration_s: float) -> ScriptedSuite:
    """Every world rescaled to ``duration_s``; gold intervals move proportionally."""

    stretched = ScriptedSuite()
    renamed: dict[str, str] = {}
    factors: dict[str, float] = {}
    for world in suite.worlds:
        clone = world.stretched(duration_s)
        renamed[world.world_id] = clone.world_id
        for v in world.videos:
            factors[f"{world.world_id}/{v.descriptor.id}"] = duration_s / v.descriptor.duration_s
        stretched.worlds.append(clone)
    for q in suite.questions:
        factor = factors[f"{q.world_id}/{q.video_id}"]
        stretched.questions.append(
            replace(
                q,
                question_id=f"{q.question_id}@{format_seconds(duration_s)}s",
                world_id=renamed[q.world_id],
                gold_interval=TemporalInterval(
                    q.gold_interval.start_s * factor, q.gold_interval.end_s * factor
                ),
            )
        )
    return stretched


def duration_sweep(
    base: ScriptedSuite,
    durations: Sequence[float],
    cfg: SessionConfig,
    ports_factory: PortsFactory = scripted_ports,
    *,
    workers: int = 1,
) -> dict[str, float]:
    """Frame fraction per duration for the base suite stretched to each duration."""

    if not durations:
        raise ValueError("at least one duration is required")
    if any(d <= 0 for d in durations):
        raise ValueError("durations must be positive")
    if any(b <= a for a, b in zip(durations, durations[1:])):
        raise ValueError("durations must be strictly ascending")

    fractions: dict[str, float] = {}
    for duration in durations:
        report = run_suite(
            stretch_suite(base, duration),
            cfg,
            ports_factory,
            workers=workers,
            with_oracle=False,
        )
        fractions.update(report.frame_fraction_by_duration())
        LOGGER.info("sweep duration=%.0fs mean_frames=%.1f", duration, report.mean_frames)
    return fractions


@dataclass(frozen=True)
class AblationRow:
    label: str
    accuracies: tuple[float, ...]
    mean_frames: float

    @property
    def mean_accuracy(self) -> float:
        return sum(self.accuracies) / len(self.accuracies) if self.accuracies else 0.0


def ablation_table(
    suite: ScriptedSuite,
    cfg: SessionConfig,
    seeds: Sequence[int],
    ports_factory: PortsFactory = scripted_ports,
    *,
    workers: int = 1,
) -> list[AblationRow]:
    """Full configuration plus one row per removed component, each over every seed."""

    if not seeds:
        raise ValueError("at least one seed is required")
    rows = []
    for ablation in ABLATION_ROWS:
        accuracies = []
        frames = []
        label = "full"
        for seed in seeds:
            row_cfg = replace(cfg, ablation=ablation, seed=seed)
            label = row_cfg.label
            report = run_suite(suite, row_cfg, ports_factory, workers=workers, with_oracle=False)
            accuracies.append(report.accuracy)
            frames.append(report.mean_frames)
        rows.append(AblationRow(label, tuple(accuracies), sum(frames) / len(frames)))
    return rows


def accuracy_drops(rows: Sequence[AblationRow]) -> dict[str, float]:
    """Mean-accuracy drop of each row against the first (full) row."""

    if not rows:
        return {}
    full = rows[0].mean_accuracy
    return {row.label: full - row.mean_accuracy for row in rows}

