from __future__ import annotations

import argparse
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any

from jsonschema.exceptions import ValidationError

from timeline_qa.backends.frames import FrameFileVision
from timeline_qa.backends.ports import Ports, VisionPort
from timeline_qa.backends.remote import HttpJsonClient, RemoteLLM, RemoteVision
from timeline_qa.config import (
    endpoint_config,
    load_config_document,
    resolve_log_level,
    resolve_workers,
    session_config_from_mapping,
)
from timeline_qa.controller.replay import replay_session
from timeline_qa.controller.session import Ablation, SessionConfig, run_session
from timeline_qa.controller.trace import SessionTrace
from timeline_qa.core.codec import encode
from timeline_qa.core.types import Query, QueryOption, VideoDescriptor
from timeline_qa.determinism import write_json
from timeline_qa.errors import PortUnavailableError, ReplayError, SessionAbortedError
from timeline_qa.harness.default_suite import default_suite
from timeline_qa.harness.oracle import brute_force_oracle
from timeline_qa.harness.render import (
    OutputFormat,
    ablation_document,
    render_ablation,
    render_report,
    render_structured,
    render_sweep,
    sweep_document,
    write_report_files,
)
from timeline_qa.harness.runner import RunReport, ablation_table, duration_sweep, run_suite
from timeline_qa.harness.suite import ScriptedSuite, load_suite
from timeline_qa.outputs import (
    MANIFEST_NAME,
    RunLayout,
    resolve_out_root,
    sanitize_id,
    write_manifest,
)

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_CONFIG = 2

DEFAULT_SWEEP_DURATIONS = (30.0, 300.0, 1200.0, 3000.0)
DEFAULT_ABLATION_SEEDS = 10


class ConfigError(Exception):
    pass


@contextmanager
def _timed(label: str) -> Any:
    start = time.perf_counter()
    print(f"[profile] START {label}", file=sys.stderr, flush=True)
    try:
        yield
    finally:
        elapsed = time.perf_counter() - start
        print(f"[profile] DONE  {label} ({elapsed:.2f}s)", file=sys.stderr, flush=True)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="Session config JSON (see schemas/config/).")
    p.add_argument("--seed", type=int, help="Session seed (overrides the config file).")
    p.add_argument(
        "--ablation",
        action="append",
        default=[],
        choices=[a.value for a in Ablation],
        help="Disable one component (repeatable).",
    )
    p.add_argument("--out", help="Output directory (default: $QTR_OUT_ROOT or out/runs).")
    p.add_argument(
        "--format",
        choices=OutputFormat.ALL,
        default=OutputFormat.TEXT,
        help="What is printed to stdout.",
    )
    p.add_argument(
        "--suite",
        help="Directory of scripted-world JSON files (default: the built-in suite).",
    )
    p.add_argument("--workers", type=int, help="Suite worker pool size (default: CPU count).")
    p.add_argument("--log-level", help="Logging level (default: $QTR_LOG_LEVEL or WARNING).")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="timeline-qa",
        description="Answer questions about long videos by planning which segments to look at.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Answer one question.")
    _common(run)
    run.add_argument("--question-id", help="Question of the suite to answer.")
    run.add_argument("--frames", help="Directory of precomputed frame embeddings (manifest.json).")
    run.add_argument("--video-id", help="Real video to ask about.")
    run.add_argument("--question", help="Question text for a real video.")
    run.add_argument(
        "--option",
        action="append",
        default=[],
        metavar="LABEL=TEXT",
        help="Multiple-choice option (repeatable).",
    )
    run.add_argument("--duration", type=float, help="Video duration in seconds (remote vision).")
    run.add_argument("--fps", type=float, default=1.0, help="Frames per second (remote vision).")

    suite = sub.add_parser("suite", help="Run every question and write the full report.")
    _common(suite)

    sweep = sub.add_parser("sweep", help="Frame fraction over stretched video durations.")
    _common(sweep)
    sweep.add_argument(
        "--durations",
        type=float,
        nargs="+",
        default=list(DEFAULT_SWEEP_DURATIONS),
        help="Durations in seconds, ascending.",
    )
    sweep.add_argument("--world", help="World to stretch (default: the first world).")
    sweep.add_argument("--tag", default="long", help="Question tag to sweep (default: long).")

    ablate = sub.add_parser("ablate", help="Accuracy of the full engine and each ablation.")
    _common(ablate)
    ablate.add_argument(
        "--seeds",
        type=int,
        default=DEFAULT_ABLATION_SEEDS,
        help="Number of seeds, counted up from --seed (default: 10).",
    )

    replay = sub.add_parser("replay", help="Re-run a recorded session from its trace.")
    _common(replay)
    replay.add_argument("trace", help="Path to a trace.ndjson file.")

    oracle = sub.add_parser("oracle", help="Exhaustive window scan for suite questions.")
    _common(oracle)
    oracle.add_argument("--question-id", help="Only this question.")
    return p


def _load_suite(args: argparse.Namespace) -> ScriptedSuite:
    if args.suite:
        return load_suite(args.suite)
    return default_suite()


def _session_config(args: argparse.Namespace) -> tuple[SessionConfig, dict[str, Any]]:
    doc = load_config_document(args.config)
    return session_config_from_mapping(doc, seed=args.seed, ablation=args.ablation), doc


def _layout(args: argparse.Namespace) -> RunLayout:
    return RunLayout(resolve_out_root(args.out))


def _finish(layout: RunLayout, written: list[Path]) -> None:
    write_manifest(layout.root, written)


def _collect(root: Path) -> list[Path]:
    return sorted(p for p in root.rglob("*") if p.is_file() and p.name != MANIFEST_NAME)


def _emit_report(args: argparse.Namespace, report: RunReport, layout: RunLayout) -> int:
    document = report.to_dict()
    write_report_files(document, layout.root)
    _finish(layout, _collect(layout.root))
    sys.stdout.write(render_report(document, args.format))
    return EXIT_FAILURES if report.failures else EXIT_OK


def _cmd_suite(args: argparse.Namespace) -> int:
    cfg, _ = _session_config(args)
    suite = _load_suite(args)
    layout = _layout(args)
    with _timed(f"suite ({len(suite)} questions, {cfg.label})"):
        report = run_suite(suite, cfg, workers=resolve_workers(args.workers), layout=layout)
    return _emit_report(args, report, layout)


def _parse_options(raw: list[str]) -> tuple[QueryOption, ...] | None:
    options = []
    for item in raw:
        label, sep, text = item.partition("=")
        if not sep or not label.strip() or not text.strip():
            raise ConfigError(f"--option must look like LABEL=TEXT, got {item!r}")
        options.append(QueryOption(label.strip(), text.strip()))
    return tuple(options) or None


def _real_video_ports(
    args: argparse.Namespace, cfg: SessionConfig, doc: dict[str, Any]
) -> tuple[Ports, VideoDescriptor, list[HttpJsonClient]]:
    """Remote LLM plus frame files (``--frames``) or the remote vision endpoint."""

    endpoint = endpoint_config(doc)
    if endpoint is None:
        raise ConfigError("real-video runs need an 'endpoint' section in the config file")
    try:
        clients = [HttpJsonClient(endpoint, seed=cfg.seed)]
        if args.frames:
            vision: VisionPort = FrameFileVision(Path(args.frames))
            video = vision.descriptor(args.video_id)
        else:
            if not endpoint.vision_base_url or args.duration is None:
                raise ConfigError(
                    "without --frames, runs need endpoint.vision_base_url and --duration"
                )
            clients.append(
                HttpJsonClient(endpoint, base_url=endpoint.vision_base_url, seed=cfg.seed)
            )
            vision = RemoteVision(clients[-1])
            video = VideoDescriptor.from_duration(args.video_id, args.duration, args.fps)
    except PortUnavailableError as exc:
        raise ConfigError(str(exc)) from exc
    return Ports(llm=RemoteLLM(clients[0]), vision=vision), video, clients


def _cmd_run_real(args: argparse.Namespace, cfg: SessionConfig, doc: dict[str, Any]) -> int:
    if not args.video_id or not args.question:
        raise ConfigError("real-video runs need --video-id and --question")
    ports, video, clients = _real_video_ports(args, cfg, doc)
    query = Query(text=args.question, video=video, options=_parse_options(args.option))
    layout = _layout(args)
    question_id = sanitize_id(args.video_id)
    try:
        result = run_session(query, video, cfg, ports)
    except SessionAbortedError as exc:
        exc.trace.write(layout.trace_path(question_id))
        _finish(layout, _collect(layout.root))
        print(f"session aborted: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    finally:
        for client in clients:
            client.close()
    result.trace.write(layout.trace_path(question_id))
    write_json(layout.graph_path(question_id), encode(result.graph))
    _finish(layout, _collect(layout.root))
    summary = {
        "answer": result.final.answer,
        "reason": result.final.reason,
        "confidence": result.final.confidence.score,
        "frames": result.total_frames,
        "iterations": result.iterations_used,
        "terminated_by": result.terminated_by.value,
        "answer_interval": [result.answer_interval.start_s, result.answer_interval.end_s],
    }
    if args.format == OutputFormat.STRUCTURED:
        sys.stdout.write(render_structured(summary))
    else:
        for key, value in summary.items():
            print(f"{key}: {value}")
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    cfg, doc = _session_config(args)
    if args.frames or args.question or args.video_id:
        return _cmd_run_real(args, cfg, doc)
    if not args.question_id:
        raise ConfigError("run needs --question-id, or --video-id and --question")
    suite = _load_suite(args)
    chosen = [q for q in suite if q.question_id == args.question_id]
    if not chosen:
        raise ConfigError(f"unknown question id: {args.question_id}")
    single = ScriptedSuite([suite.world(chosen[0].world_id)], chosen)
    layout = _layout(args)
    report = run_suite(single, cfg, layout=layout)
    return _emit_report(args, report, layout)


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg, _ = _session_config(args)
    suite = _load_suite(args)
    world_id = args.world or suite.worlds[0].world_id
    base = suite.subset(tag=args.tag, world_id=world_id)
    if not len(base):
        raise ConfigError(f"no questions tagged {args.tag!r} in world {world_id!r}")
    layout = _layout(args)
    with _timed(f"sweep {world_id} over {len(args.durations)} durations"):
        fractions = duration_sweep(
            base, args.durations, cfg, workers=resolve_workers(args.workers)
        )
    write_json(layout.report_path("sweep", "json"), sweep_document(fractions, cfg.label))
    _finish(layout, _collect(layout.root))
    sys.stdout.write(render_sweep(fractions, args.format, cfg.label))
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    cfg, _ = _session_config(args)
    if args.seeds < 1:
        raise ConfigError("--seeds must be positive")
    suite = _load_suite(args)
    seeds = [cfg.seed + i for i in range(args.seeds)]
    layout = _layout(args)
    with _timed(f"ablation over {len(seeds)} seeds"):
        rows = ablation_table(suite, cfg, seeds, workers=resolve_workers(args.workers))
    write_json(layout.report_path("ablation", "json"), ablation_document(rows, seeds))
    _finish(layout, _collect(layout.root))
    sys.stdout.write(render_ablation(rows, seeds, args.format))
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    trace = SessionTrace.read(Path(args.trace))
    try:
        result = replay_session(trace)
    except ReplayError as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    summary = {
        "answer": result.final.answer,
        "confidence": result.final.confidence.score,
        "frames": result.total_frames,
        "iterations": result.iterations_used,
        "terminated_by": result.terminated_by.value,
        "trace_hash": result.trace.trace_hash(),
        "matches": result.trace.trace_hash() == trace.trace_hash(),
    }
    if args.format == OutputFormat.STRUCTURED:
        sys.stdout.write(render_structured(summary))
    else:
        for key, value in summary.items():
            print(f"{key}: {value}")
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace) -> int:
    cfg, _ = _session_config(args)
    suite = _load_suite(args)
    questions = [q for q in suite if args.question_id in (None, q.question_id)]
    if args.question_id and not questions:
        raise ConfigError(f"unknown question id: {args.question_id}")
    rows = []
    for q in questions:
        result = brute_force_oracle(
            suite.world(q.world_id), q, cap_s=cfg.budget.max_segment_s, budget_k=cfg.budget_k
        )
        gold_hit = result.answer_interval.intersection_length(q.gold_interval) > 0.0
        rows.append(dict(result.to_dict(), question_id=q.question_id, gold_overlap=gold_hit))
    if args.format == OutputFormat.STRUCTURED:
        sys.stdout.write(render_structured({"questions": rows}))
    elif args.format == OutputFormat.TABLE:
        print("question_id,window_start,window_end,frames,found,gold_overlap")
        for r in rows:
            s, e = r["window"]
            print(f"{r['question_id']},{s},{e},{r['frames']},{r['found']},{r['gold_overlap']}")
    else:
        for r in rows:
            s, e = r["window"]
            print(
                f"{r['question_id']:<28} [{s:g}, {e:g}] frames={r['frames']} "
                f"found={'yes' if r['found'] else 'no'}"
            )
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "suite": _cmd_suite,
    "sweep": _cmd_sweep,
    "ablate": _cmd_ablate,
    "replay": _cmd_replay,
    "oracle": _cmd_oracle,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=resolve_log_level(args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValidationError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main(sys.argv[1:]))
