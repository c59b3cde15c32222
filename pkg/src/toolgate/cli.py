"""Operator entry points.

Subcommands: serve the gateway, administer the cache, scan API status,
judge task solvability, run the chain-of-thought driver against a
gateway, and compute metric reports.  Every command exits 0 on success
and non-zero with a single machine-parseable ``error: <Class>: <detail>``
line otherwise.  All randomness takes explicit seeds.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote

import httpx

from . import evaluation
from .agent import AgentConfig, GatewayClient, run_task
from .cache import RecordSource, ResponseCache
from .classifier import StatusReport, scan_status
from .config import ConfigError, ServiceConfig, load_config
from .evaluation import (
    AnswerRecord,
    Judge,
    Judgment,
    LegacyTaskState,
    MetricReport,
    legacy_pass_report,
    legacy_win_report,
    load_answers,
    load_tasks,
    make_comparison_judge,
    sopr,
    sowr,
)
from .gateway import FaultMode
from .llm import AuditLog, ChatModel, HttpChatBridge, LlmBridge, RecordReplayBridge
from .model import SolvableVerdict, ToolgateError, load_documentation
from .service import assemble_router, build_app


@dataclass(frozen=True)
class ExperimentSpec:
    """One driver run: which tasks, which label, which fault plan."""

    task_group: str | None
    method_label: str
    fault_proportion: float | None
    fault_seed: int
    fault_mode: str
    repeats: int
    output_dir: Path

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


def _build_bridge(config: ServiceConfig) -> LlmBridge:
    if config.bridge is None:
        raise ConfigError("this command needs a 'bridge' section in the config")
    audit = AuditLog(config.bridge.audit_log) if config.bridge.audit_log else None
    bridge: LlmBridge = HttpChatBridge(
        endpoint=config.bridge.endpoint,
        api_key=os.environ.get(config.bridge.api_key_env, ""),
        timeout_s=config.bridge.timeout_s,
        retry_budget=config.bridge.retry_budget,
        backoff_s=config.bridge.backoff_s,
        max_in_flight=config.bridge.max_in_flight,
        audit=audit,
    )
    if config.bridge.record_dir:
        bridge = RecordReplayBridge(config.bridge.record_dir, inner=bridge)
    return bridge


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    os.replace(tmp, path)


# -- serve ---------------------------------------------------------------


def cmd_serve(args: argparse.Namespace, *, server_runner=None) -> int:
    config = load_config(args.config)
    router = assemble_router(config)
    app = build_app(router, debug_traces=config.debug_traces)
    # Pre-flight bind check so a busy port fails with a clean one-liner
    # instead of a server stack trace.
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((config.host, config.port))
    except OSError as exc:
        raise ConfigError(
            f"cannot bind {config.host}:{config.port}: {exc}"
        ) from exc
    finally:
        probe.close()
    if server_runner is None:
        import uvicorn

        server_runner = uvicorn.run
    server_runner(app, host=config.host, port=config.port)
    return 0


# -- cache ---------------------------------------------------------------


def cmd_cache(args: argparse.Namespace) -> int:
    cache = ResponseCache(args.cache_dir)
    if args.action == "import":
        kept, dropped = cache.import_records(args.path, RecordSource(args.source))
        print(f"kept {kept} dropped {dropped}")
        return 0
    if args.action == "stats":
        stats = cache.stats()
        if args.output:
            _write_json(Path(args.output), stats.to_json())
        print(f"{'source':<12} {'records':>8}")
        for source in RecordSource:
            print(f"{source.value:<12} {stats.per_source_counts.get(source, 0):>8}")
        print(f"{'total':<12} {stats.total:>8}")
        return 0
    if args.action == "filter":
        removed = cache.filter_invalid()
        print(f"removed {removed}")
        return 0
    raise ToolgateError(f"unknown cache action {args.action}")


# -- scan ----------------------------------------------------------------


def cmd_scan(
    args: argparse.Namespace,
    *,
    bridge: LlmBridge | None = None,
    upstream=None,
) -> int:
    docs = load_documentation(args.docs)
    if not docs:
        print("warning: no documented APIs found; writing an empty report", file=sys.stderr)
        report = StatusReport(counts={})
    else:
        config = load_config(args.config)
        if bridge is None:
            bridge = _build_bridge(config)
        if upstream is None:
            if config.upstream is None:
                from .classifier import ScanConfigError

                raise ScanConfigError("scan needs an 'upstream' section in the config")
            from .upstream import UpstreamClient

            upstream = UpstreamClient(config.upstream.to_upstream_config())
        model_name = args.model or config.judges.evaluator_model
        call_writer = ChatModel(bridge, model_name=model_name, temperature=0.0)
        report = scan_status(
            docs,
            call_writer,
            upstream,
            retry_budget=args.retry_budget,
            max_workers=args.workers,
        )
    if args.output:
        _write_json(Path(args.output), report.to_json())
    print(report.render_table())
    return 0


# -- solvable-task filtration ---------------------------------------------


def cmd_filter_tasks(
    args: argparse.Namespace, *, judges: list[Judge] | None = None
) -> int:
    tasks = load_tasks(args.tasks)
    if judges is None:
        config = load_config(args.config)
        bridge = _build_bridge(config)
        judges = [
            Judge(label=name, model=ChatModel(bridge, name, config.judges.temperature))
            for name in config.judges.solvability_models
        ]
        threshold = config.judges.vote_threshold
    else:
        threshold = args.threshold
    solvable: list[str] = []
    per_task: dict[str, dict] = {}
    for task_id in sorted(tasks):
        result = evaluation.judge_solvability(
            tasks[task_id], judges, threshold=threshold
        )
        per_task[task_id] = {
            "verdict": result.verdict.value,
            "per_judge": [[label, verdict.value] for label, verdict in result.per_judge],
        }
        if result.verdict is SolvableVerdict.SOLVABLE:
            solvable.append(task_id)
    payload = {"solvable_task_ids": solvable, "per_task": per_task}
    _write_json(Path(args.output), payload)
    print(f"solvable {len(solvable)} of {len(tasks)}")
    return 0


# -- run -----------------------------------------------------------------


def cmd_run(
    args: argparse.Namespace,
    *,
    bridge: LlmBridge | None = None,
    client: httpx.Client | None = None,
) -> int:
    config = load_config(args.config)
    if bridge is None:
        bridge = _build_bridge(config)
    spec = ExperimentSpec(
        task_group=args.group,
        method_label=args.method_label,
        fault_proportion=args.proportion,
        fault_seed=args.seed,
        fault_mode=args.fault_mode,
        repeats=args.repeats,
        output_dir=Path(args.output),
    )
    tasks = load_tasks(args.tasks)
    if spec.task_group:
        tasks = {tid: t for tid, t in tasks.items() if t.group == spec.task_group}
    docs = load_documentation(args.docs) if args.docs else []
    docs_for = {}
    for doc in docs:
        docs_for.setdefault(doc.id.as_tool(), []).append(doc)

    gateway = GatewayClient(client or httpx.Client(base_url=args.gateway, timeout=60.0))
    from .agent import GatewayError

    if not gateway.healthy():
        raise GatewayError(f"gateway at {args.gateway} is not healthy")

    if spec.fault_proportion is not None:
        universe = sorted(
            {tool.as_tool() for task in tasks.values() for tool in task.available_tools}
        )
        gateway.install_fault(
            spec.fault_proportion, spec.fault_seed, spec.fault_mode, tools=universe
        )

    agent_config = AgentConfig(
        model_name=args.model or config.judges.evaluator_model,
        temperature=args.temperature,
        step_budget=args.step_budget,
        method_label=spec.method_label,
    )

    def drive(task_id: str) -> AnswerRecord:
        task = tasks[task_id]
        task_docs = [
            doc
            for tool in task.available_tools
            for doc in docs_for.get(tool.as_tool(), [])
        ]
        return run_task(task, task_docs, gateway, bridge, agent_config)

    spec.output_dir.mkdir(parents=True, exist_ok=True)
    task_ids = sorted(tasks)
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        records = list(pool.map(drive, task_ids))
    for record in records:
        _write_json(
            spec.output_dir / f"{quote(record.task_id, safe='')}.json",
            record.to_json(),
        )
    print(f"ran {len(records)} tasks -> {spec.output_dir}")
    return 0


# -- eval ----------------------------------------------------------------

_JUDGMENTS = {j.value: j for j in Judgment}
_TASK_STATES = {s.value: s for s in LegacyTaskState}


def _load_verdicts(path: str) -> dict[str, list[Judgment]]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return {
        task_id: [_JUDGMENTS[v] for v in verdicts]
        for task_id, verdicts in payload.items()
    }


def _judge_answers(
    tasks, answers, judge: Judge, repeats: int
) -> dict[str, list[Judgment]]:
    unknown = sorted(set(answers) - set(tasks))
    if unknown:
        raise ToolgateError(f"answers reference unknown tasks: {', '.join(unknown)}")
    verdicts: dict[str, list[Judgment]] = {tid: [] for tid in sorted(answers)}
    for _ in range(repeats):
        for task_id in sorted(answers):
            verdicts[task_id].append(
                evaluation.judge_answer(tasks[task_id], answers[task_id], judge)
            )
    return verdicts


def _evaluator_judge(args, bridge: LlmBridge | None, config: ServiceConfig | None) -> Judge:
    if bridge is None:
        if config is None:
            raise ConfigError("judging answers needs --config with a bridge section")
        bridge = _build_bridge(config)
    model_name = args.model or (config.judges.evaluator_model if config else "evaluator")
    temperature = config.judges.temperature if config else 0.0
    return Judge(label=model_name, model=ChatModel(bridge, model_name, temperature))


def cmd_eval(args: argparse.Namespace, *, bridge: LlmBridge | None = None) -> int:
    tasks = load_tasks(args.tasks)
    groups = {task_id: task.group for task_id, task in tasks.items()}
    config = load_config(args.config) if args.config else None
    output_dir = Path(args.output)

    def emit(report: MetricReport) -> None:
        _write_json(output_dir / f"{report.metric.value}.json", report.to_json())
        print(report.render_table())

    if args.mode == "sopr":
        if args.verdicts:
            verdicts = _load_verdicts(args.verdicts)
        else:
            answers = load_answers(args.answers)
            judge = _evaluator_judge(args, bridge, config)
            verdicts = _judge_answers(tasks, answers, judge, args.repeats)
        emit(sopr(verdicts, groups=groups))
        return 0

    if args.mode == "sowr":
        judge_fn = None
        if args.verdicts and args.reference_verdicts:
            candidate = _load_verdicts(args.verdicts)
            reference = _load_verdicts(args.reference_verdicts)
        else:
            answers = load_answers(args.answers)
            reference_answers = load_answers(args.reference)
            judge = _evaluator_judge(args, bridge, config)
            candidate = _judge_answers(tasks, answers, judge, args.repeats)
            reference = _judge_answers(tasks, reference_answers, judge, args.repeats)
            judge_fn = make_comparison_judge(judge, tasks, answers, reference_answers)
        emit(sowr(candidate, reference, judge_fn, groups=groups))
        return 0

    if args.mode == "legacy":
        states_payload = json.loads(Path(args.states).read_text(encoding="utf-8"))
        states = {
            task_id: (_TASK_STATES[pair[0]], _JUDGMENTS[pair[1]])
            for task_id, pair in states_payload.items()
        }
        report = legacy_pass_report(
            states, args.seed, repeats=args.repeats, groups=groups
        )
        emit(report)
        if args.reference_states:
            ref_payload = json.loads(Path(args.reference_states).read_text(encoding="utf-8"))
            ref_states = {
                task_id: (_TASK_STATES[pair[0]], _JUDGMENTS[pair[1]])
                for task_id, pair in ref_payload.items()
            }
            reference = legacy_pass_report(
                ref_states, args.seed + 1, repeats=args.repeats, groups=groups
            )
            emit(legacy_win_report(report, reference, groups=groups))
        return 0

    raise ToolgateError(f"unknown eval mode {args.mode}")


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toolgate",
        description="Virtual tool-API gateway and benchmark evaluation harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the gateway service")
    p_serve.add_argument("--config", required=True)

    p_cache = sub.add_parser("cache", help="administer the response cache")
    p_cache.add_argument("action", choices=["import", "stats", "filter"])
    p_cache.add_argument("path", nargs="?", help="record dump for 'import'")
    p_cache.add_argument("--cache-dir", required=True)
    p_cache.add_argument(
        "--source", default="new", choices=[s.value for s in RecordSource]
    )
    p_cache.add_argument("--output", help="write stats JSON here")

    p_scan = sub.add_parser("scan", help="probe documented APIs and classify outcomes")
    p_scan.add_argument("--docs", required=True)
    p_scan.add_argument("--config", required=True)
    p_scan.add_argument("--output")
    p_scan.add_argument("--model", help="call-writer model override")
    p_scan.add_argument("--workers", type=int, default=4)
    p_scan.add_argument("--retry-budget", type=int, default=2)

    p_filter = sub.add_parser(
        "filter-tasks", help="judge task solvability and freeze the solvable set"
    )
    p_filter.add_argument("--tasks", required=True)
    p_filter.add_argument("--config")
    p_filter.add_argument("--output", required=True)
    p_filter.add_argument(
        "--threshold", default="majority", choices=["majority", "unanimous"]
    )

    p_run = sub.add_parser("run", help="drive tasks through the gateway")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--gateway", required=True, help="gateway base URL")
    p_run.add_argument("--tasks", required=True)
    p_run.add_argument("--docs", help="documentation directory for tool prompts")
    p_run.add_argument("--output", required=True)
    p_run.add_argument("--group")
    p_run.add_argument("--method-label", default="cot")
    p_run.add_argument("--model")
    p_run.add_argument("--temperature", type=float, default=0.0)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--proportion", type=float)
    p_run.add_argument(
        "--fault-mode",
        default=FaultMode.VIRTUAL_FALLBACK.value,
        choices=[m.value for m in FaultMode],
    )
    p_run.add_argument("--step-budget", type=int, default=6)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--repeats", type=int, default=1)

    p_eval = sub.add_parser("eval", help="compute metric reports")
    p_eval.add_argument("--mode", required=True, choices=["sopr", "sowr", "legacy"])
    p_eval.add_argument("--tasks", required=True)
    p_eval.add_argument("--output", required=True)
    p_eval.add_argument("--answers")
    p_eval.add_argument("--reference")
    p_eval.add_argument("--verdicts")
    p_eval.add_argument("--reference-verdicts")
    p_eval.add_argument("--states")
    p_eval.add_argument("--reference-states")
    p_eval.add_argument("--config")
    p_eval.add_argument("--model")
    p_eval.add_argument("--repeats", type=int, default=3)
    p_eval.add_argument("--seed", type=int, default=0)
    return parser


def _validate_eval_args(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if args.command != "eval":
        return
    if args.mode == "sopr" and not (args.answers or args.verdicts):
        parser.error("eval --mode sopr needs --answers or --verdicts")
    if args.mode == "sowr":
        have_files = args.verdicts and args.reference_verdicts
        have_dirs = args.answers and args.reference
        if not (have_files or have_dirs):
            parser.error(
                "eval --mode sowr needs --answers plus --reference, "
                "or --verdicts plus --reference-verdicts"
            )
    if args.mode == "legacy" and not args.states:
        parser.error("eval --mode legacy needs --states")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate_eval_args(parser, args)
    if args.command == "cache" and args.action == "import" and not args.path:
        parser.error("cache import needs a dump path")
    handlers: dict = {
        "serve": cmd_serve,
        "cache": cmd_cache,
        "scan": cmd_scan,
        "filter-tasks": cmd_filter_tasks,
        "run": cmd_run,
        "eval": cmd_eval,
    }
    try:
        return handlers[args.command](args)
    except ToolgateError as exc:
        detail = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {detail}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
