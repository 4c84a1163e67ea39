"""Engagement command line: run, serve, score, ingest, replay."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import Config, ConfigError
from .coordinator import EngagementDeps, build_report, run_engagement, DEFAULT_PHASES
from .events import EventLog, TruncatedLog, read_events
from .executor import Scenario, SimulatedShell
from .gateway import HTTPBackend, ScriptedBackend
from .knowledge import KnowledgeRepository
from .metrics import (
    compute_result,
    format_table,
    load_machines_manifest,
    load_run_records,
)
from .planner import UnparseablePlan
from .executor import ChannelClosed
from . import templates

__all__ = ["main", "cli_run", "replay"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCOMPLETE = 2


def _build_backend(config: Config):
    if config.backend.kind == "scripted":
        return ScriptedBackend.from_jsonl(config.backend.script_path)
    return HTTPBackend(
        endpoint=config.backend.endpoint,
        model=config.backend.model,
        timeout_s=config.backend.timeout_ms / 1000.0,
    )


def _report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def cli_run(config: Config, goal: str) -> int:
    """Execute one engagement; exit 0 on success, 2 incomplete, 1 on error."""
    try:
        config.validate()
        if config.template_dir:
            templates.set_template_dir(config.template_dir)
        if not Path(config.scenario_path).exists():
            print(f"scenario file not found: {config.scenario_path}", file=sys.stderr)
            return EXIT_ERROR
        scenario = Scenario.load(config.scenario_path)
        repo = KnowledgeRepository()
        for corpus in config.corpus_paths:
            if Path(corpus).is_dir():
                repo.ingest_dir(corpus)
            else:
                repo.ingest_file(corpus)
        deps = EngagementDeps(
            backend=_build_backend(config),
            channel=SimulatedShell(scenario),
            repo=repo,
            log=EventLog(config.event_log_path),
            scenario=scenario,
            mode=config.mode,
            retrieval_k=config.retrieval_k,
            max_iterations=config.max_iterations,
            plan_repairs=config.plan_repairs,
            timeout_ms=config.command_timeout_ms,
        )
        report = run_engagement(goal, DEFAULT_PHASES, deps)
    except (ConfigError, UnparseablePlan, ChannelClosed, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    Path(config.report_path).write_text(_report_json(report) + "\n", encoding="utf-8")
    print(_report_json(report))
    return EXIT_OK if report["status"] == "success" else EXIT_INCOMPLETE


def replay(log_path: str) -> dict:
    """Recompute the engagement report purely from the event log."""
    events = read_events(log_path)
    return build_report(events)


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        config = Config.load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return cli_run(config, args.goal)


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import EngagementSession, build_app

    try:
        config = Config.load(args.config)
        config.validate()
        scenario = Scenario.load(config.scenario_path)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if config.template_dir:
        templates.set_template_dir(config.template_dir)
    session = EngagementSession(engagement_id="e1", log=EventLog(config.event_log_path))
    deps = EngagementDeps(
        backend=_build_backend(config),
        channel=SimulatedShell(scenario),
        repo=KnowledgeRepository(),
        log=session.log,
        scenario=scenario,
        mode=config.mode,
        retrieval_k=config.retrieval_k,
        max_iterations=config.max_iterations,
        plan_repairs=config.plan_repairs,
        timeout_ms=config.command_timeout_ms,
    )
    session.start(args.goal, DEFAULT_PHASES, deps)
    host, _, port = config.listen_address.partition(":")
    uvicorn.run(build_app({"e1": session}), host=host or "127.0.0.1",
                port=int(port or 8642), log_level="warning")
    return EXIT_OK


def _cmd_score(args: argparse.Namespace) -> int:
    try:
        records = load_run_records(args.records_dir)
        machines = load_machines_manifest(args.machines)
        result = compute_result(records, machines, runs=args.runs)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(format_table(result))
    if args.out:
        payload = {
            "overall_rate": result.overall_rate,
            "subtask_1exp": result.subtask_1exp,
            "subtask_5exp": result.subtask_5exp,
            "counts": result.counts,
        }
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
    return EXIT_OK


def _cmd_ingest(args: argparse.Namespace) -> int:
    repo = KnowledgeRepository(persist_path=args.store)
    try:
        count = repo.ingest_dir(args.corpus_dir)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"ingested {count} entries into {args.store}")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    try:
        report = replay(args.log)
    except TruncatedLog as exc:
        print(f"error: truncated log, last good offset {exc.offset}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(_report_json(report))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="redloop",
                                     description="autonomous pentest engagement engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one engagement")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--goal", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_serve = sub.add_parser("serve", help="run an engagement with the operator API")
    p_serve.add_argument("--config", required=True)
    p_serve.add_argument("--goal", required=True)
    p_serve.set_defaults(func=_cmd_serve)

    p_score = sub.add_parser("score", help="compute benchmark metrics")
    p_score.add_argument("--records-dir", required=True)
    p_score.add_argument("--machines", required=True)
    p_score.add_argument("--runs", type=int, default=5)
    p_score.add_argument("--out", default="")
    p_score.set_defaults(func=_cmd_score)

    p_ingest = sub.add_parser("ingest", help="ingest a knowledge corpus directory")
    p_ingest.add_argument("--corpus-dir", required=True)
    p_ingest.add_argument("--store", required=True)
    p_ingest.set_defaults(func=_cmd_ingest)

    p_replay = sub.add_parser("replay", help="rebuild a report from an event log")
    p_replay.add_argument("--log", required=True)
    p_replay.set_defaults(func=_cmd_replay)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
