import json
import socket

import pytest
from fastapi.testclient import TestClient

from toolgate import cli
from toolgate.cache import ResponseCache
from toolgate.evaluation import Judge
from toolgate.gateway import Router
from toolgate.llm import AuditLog, ChatModel, StubBridge
from toolgate.model import ApiResponse
from toolgate.service import build_app

from helpers import ScriptedSimulator, ScriptedUpstream, ok_envelope
from test_agent import scripted_agent


def _write_dump(tmp_path):
    entries = []
    for i in range(6):
        entries.append(
            {
                "category": "C",
                "tool_name": "T",
                "api_name": "api",
                "tool_input": json.dumps({"i": i}),
                "response": {"error": "", "response": f"data {i}"},
            }
        )
    for i in range(4):
        entries.append(
            {
                "category": "C",
                "tool_name": "T",
                "api_name": "api",
                "tool_input": json.dumps({"i": 100 + i}),
                "response": {"error": "", "response": "404 Not Found"},
            }
        )
    dump = tmp_path / "dump.json"
    dump.write_text(json.dumps(entries))
    return dump


def _write_tasks(tmp_path, count=1):
    tasks = [
        {
            "task_id": f"t{i}",
            "query": f"check health {i}",
            "group": "I1-Instruction",
            "available_tools": [
                {"category": "Logistics", "tool_name": "SQUAKE", "api_name": "Checkhealth"}
            ],
        }
        for i in range(count)
    ]
    path = tmp_path / "tasks.json"
    path.write_text(json.dumps(tasks))
    return path


def _write_config(tmp_path, **extra):
    payload = {"cache_dir": str(tmp_path / "cache"), **extra}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return path


# -- cache subcommand ------------------------------------------------------------


def test_cache_import_reports_counts(tmp_path, capsys):
    dump = _write_dump(tmp_path)
    rc = cli.main(
        ["cache", "import", str(dump), "--cache-dir", str(tmp_path / "cache"), "--source", "train"]
    )
    assert rc == 0
    assert capsys.readouterr().out.strip() == "kept 6 dropped 4"


def test_cache_import_is_idempotent_via_cli(tmp_path, capsys):
    dump = _write_dump(tmp_path)
    args = ["cache", "import", str(dump), "--cache-dir", str(tmp_path / "cache")]
    cli.main(args)
    capsys.readouterr()
    cli.main(args)
    assert capsys.readouterr().out.strip() == "kept 0 dropped 10"


def test_cache_stats_on_empty_cache(tmp_path, capsys):
    rc = cli.main(["cache", "stats", "--cache-dir", str(tmp_path / "cache")])
    assert rc == 0
    out = capsys.readouterr().out
    assert "total" in out and "0" in out


def test_cache_filter_idempotence(tmp_path, capsys):
    dump = _write_dump(tmp_path)
    cli.main(["cache", "import", str(dump), "--cache-dir", str(tmp_path / "cache")])
    capsys.readouterr()
    rc = cli.main(["cache", "filter", "--cache-dir", str(tmp_path / "cache")])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "removed 0"


def test_cache_import_without_path_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["cache", "import", "--cache-dir", str(tmp_path / "cache")])
    assert excinfo.value.code == 2


def test_cache_import_surfaces_format_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    rc = cli.main(["cache", "import", str(bad), "--cache-dir", str(tmp_path / "cache")])
    assert rc == 1
    err = capsys.readouterr().err
    assert err.startswith("error: ImportFormatError:")
    assert "\n" not in err.strip()


# -- scan subcommand ----------------------------------------------------------------


def test_scan_empty_docs_dir_warns_and_writes_zero_report(tmp_path, capsys):
    docs_dir = tmp_path / "docs"
    docs_dir.mkdir()
    out_file = tmp_path / "report.json"
    rc = cli.main(
        ["scan", "--docs", str(docs_dir), "--config", str(_write_config(tmp_path)),
         "--output", str(out_file)]
    )
    assert rc == 0
    captured = capsys.readouterr()
    assert "warning" in captured.err
    assert json.loads(out_file.read_text())["total"] == 0


def _docs_dir(tmp_path):
    docs_dir = tmp_path / "docs"
    category = docs_dir / "Logistics"
    category.mkdir(parents=True)
    for tool, api in [("alpha", "ok"), ("beta", "gone"), ("gamma", "busy")]:
        (category / f"{tool}.json").write_text(
            json.dumps(
                {
                    "tool_name": tool,
                    "tool_description": f"{tool} tool",
                    "apis": [{"name": api, "description": f"{api} endpoint", "parameters": []}],
                }
            )
        )
    return docs_dir


def test_scan_three_mock_apis_counts(tmp_path, capsys):
    outcomes = {
        "alpha": ApiResponse(error="", response='{"fine": true}'),
        "beta": ApiResponse(error="", response="404 Not Found"),
        "gamma": ApiResponse(error="", response="rate limit exceeded"),
    }

    class ByTool:
        def call(self, request):
            return outcomes[request.id.tool_name]

    out_file = tmp_path / "report.json"
    args = cli.build_parser().parse_args(
        ["scan", "--docs", str(_docs_dir(tmp_path)), "--config", str(_write_config(tmp_path)),
         "--output", str(out_file)]
    )
    rc = cli.cmd_scan(args, bridge=StubBridge(lambda s, u, m, t: '{"q": 1}'), upstream=ByTool())
    assert rc == 0
    counts = json.loads(out_file.read_text())["counts"]
    assert counts["Success"] == 1
    assert counts["NotFound"] == 1
    assert counts["NotConnected"] == 1


def test_scan_unreachable_upstream_classifies_not_connected(tmp_path):
    class Unreachable:
        def call(self, request):
            return ApiResponse(error="", response="connection timed out")

    out_file = tmp_path / "report.json"
    docs_dir = _docs_dir(tmp_path)
    args = cli.build_parser().parse_args(
        ["scan", "--docs", str(docs_dir), "--config", str(_write_config(tmp_path)),
         "--output", str(out_file)]
    )
    cli.cmd_scan(args, bridge=StubBridge(lambda s, u, m, t: "{}"), upstream=Unreachable())
    assert json.loads(out_file.read_text())["counts"]["NotConnected"] == 3


# -- filter-tasks -------------------------------------------------------------------


def test_filter_tasks_writes_frozen_solvable_set(tmp_path, capsys):
    tasks = _write_tasks(tmp_path, count=3)
    out_file = tmp_path / "solvable.json"
    replies = {"t0": "Solvable", "t1": "Unsolvable", "t2": "Solvable"}

    def scripted(system, user, model, temp):
        for task_id, reply in replies.items():
            if f"check health {task_id[1:]}" in user:
                return reply
        raise AssertionError("unknown task")

    judges = [
        Judge(label=f"j{i}", model=ChatModel(StubBridge(scripted), f"j{i}"))
        for i in range(3)
    ]
    args = cli.build_parser().parse_args(
        ["filter-tasks", "--tasks", str(tasks), "--output", str(out_file)]
    )
    rc = cli.cmd_filter_tasks(args, judges=judges)
    assert rc == 0
    payload = json.loads(out_file.read_text())
    assert payload["solvable_task_ids"] == ["t0", "t2"]
    assert capsys.readouterr().out.strip() == "solvable 2 of 3"


# -- run subcommand ------------------------------------------------------------------


def _task_docs_dir(tmp_path):
    category = tmp_path / "taskdocs" / "Logistics"
    category.mkdir(parents=True, exist_ok=True)
    (category / "SQUAKE.json").write_text(
        json.dumps(
            {
                "tool_name": "SQUAKE",
                "tool_description": "logistics tool",
                "apis": [{"name": "Checkhealth", "description": "liveness", "parameters": []}],
            }
        )
    )
    return tmp_path / "taskdocs"


def _run_args(tmp_path, out_name="answers", extra=()):
    return cli.build_parser().parse_args(
        [
            "run",
            "--config", str(_write_config(tmp_path)),
            "--gateway", "http://gateway.test",
            "--tasks", str(_write_tasks(tmp_path)),
            "--docs", str(_task_docs_dir(tmp_path)),
            "--output", str(tmp_path / out_name),
            "--model", "agent",
            *extra,
        ]
    )


def _service_client(tmp_path, subdir="svc"):
    router = Router(
        ResponseCache(tmp_path / subdir / "cache"),
        ScriptedUpstream(default=ok_envelope("healthy!")),
        ScriptedSimulator(ok_envelope("simulated")),
    )
    return TestClient(build_app(router))


def test_run_writes_transcripts(tmp_path, capsys):
    client = _service_client(tmp_path)
    rc = cli.cmd_run(_run_args(tmp_path), bridge=StubBridge(scripted_agent), client=client)
    assert rc == 0
    record = json.loads((tmp_path / "answers" / "t0.json").read_text())
    assert record["final_answer"] == "Result: healthy!"
    steps = json.loads(record["solution_path"])["steps"]
    assert sum(1 for step in steps if "call" in step) == 1


def test_run_zero_step_budget_marks_unfinished(tmp_path):
    client = _service_client(tmp_path)
    args = _run_args(tmp_path, extra=("--step-budget", "0"))
    cli.cmd_run(args, bridge=StubBridge(scripted_agent), client=client)
    record = json.loads((tmp_path / "answers" / "t0.json").read_text())
    assert record["final_answer"] == ""
    assert json.loads(record["solution_path"])["finished"] is False


def test_run_with_faults_is_deterministic(tmp_path):
    extra = ("--proportion", "0.5", "--fault-mode", "virtual_fallback", "--seed", "7")
    client = _service_client(tmp_path)
    cli.cmd_run(_run_args(tmp_path, "a1", extra), bridge=StubBridge(scripted_agent), client=client)
    cli.cmd_run(_run_args(tmp_path, "a2", extra), bridge=StubBridge(scripted_agent), client=client)
    first = (tmp_path / "a1" / "t0.json").read_bytes()
    second = (tmp_path / "a2" / "t0.json").read_bytes()
    assert first == second


def test_run_aborts_when_gateway_unreachable(tmp_path, capsys):
    rc = cli.main(
        [
            "run",
            "--config", str(_write_config(tmp_path)),
            "--gateway", "http://127.0.0.1:9",  # discard port: nothing listens
            "--tasks", str(_write_tasks(tmp_path)),
            "--output", str(tmp_path / "answers"),
        ]
    )
    assert rc == 1
    assert "error:" in capsys.readouterr().err


# -- eval subcommand ------------------------------------------------------------------


def test_eval_sopr_from_verdict_file(tmp_path, capsys):
    tasks = _write_tasks(tmp_path, count=4)
    verdicts = tmp_path / "verdicts.json"
    verdicts.write_text(
        json.dumps({"t0": ["Solved"], "t1": ["Solved"], "t2": ["Unsure"], "t3": ["Unsolved"]})
    )
    out_dir = tmp_path / "report"
    rc = cli.main(
        ["eval", "--mode", "sopr", "--tasks", str(tasks), "--verdicts", str(verdicts),
         "--output", str(out_dir)]
    )
    assert rc == 0
    payload = json.loads((out_dir / "SoPR.json").read_text())
    assert payload["per_group"]["I1-Instruction"]["mean"] == 62.5
    assert "62.5" in capsys.readouterr().out


def test_eval_sopr_judges_answers_with_bridge(tmp_path):
    tasks = _write_tasks(tmp_path, count=2)
    answers_dir = tmp_path / "answers"
    answers_dir.mkdir()
    for i in range(2):
        (answers_dir / f"t{i}.json").write_text(
            json.dumps(
                {"task_id": f"t{i}", "method_label": "cot",
                 "final_answer": "all good", "solution_path": "{}"}
            )
        )
    args = cli.build_parser().parse_args(
        ["eval", "--mode", "sopr", "--tasks", str(tasks), "--answers", str(answers_dir),
         "--output", str(tmp_path / "report"), "--repeats", "2", "--model", "judge"]
    )
    rc = cli.cmd_eval(args, bridge=StubBridge(lambda s, u, m, t: "Solved"))
    assert rc == 0
    payload = json.loads((tmp_path / "report" / "SoPR.json").read_text())
    assert payload["per_group"]["I1-Instruction"]["mean"] == 100.0
    assert payload["repeats"] == 2


def test_eval_sowr_rule_only_never_invokes_judge(tmp_path):
    tasks = _write_tasks(tmp_path, count=2)
    cand = tmp_path / "cand.json"
    ref = tmp_path / "ref.json"
    cand.write_text(json.dumps({"t0": ["Solved"], "t1": ["Unsolved"]}))
    ref.write_text(json.dumps({"t0": ["Unsolved"], "t1": ["Solved"]}))
    audit = AuditLog()
    args = cli.build_parser().parse_args(
        ["eval", "--mode", "sowr", "--tasks", str(tasks), "--verdicts", str(cand),
         "--reference-verdicts", str(ref), "--output", str(tmp_path / "report")]
    )
    rc = cli.cmd_eval(args, bridge=StubBridge(lambda s, u, m, t: "candidate", audit=audit))
    assert rc == 0
    assert len(audit) == 0
    payload = json.loads((tmp_path / "report" / "SoWR.json").read_text())
    assert payload["per_group"]["I1-Instruction"]["mean"] == 50.0


def test_eval_sowr_without_reference_is_usage_error(tmp_path):
    tasks = _write_tasks(tmp_path)
    with pytest.raises(SystemExit) as excinfo:
        cli.main(
            ["eval", "--mode", "sowr", "--tasks", str(tasks),
             "--answers", str(tmp_path), "--output", str(tmp_path / "r")]
        )
    assert excinfo.value.code == 2


def test_eval_legacy_reports_are_byte_identical_across_reruns(tmp_path):
    tasks = _write_tasks(tmp_path, count=3)
    states = tmp_path / "states.json"
    states.write_text(
        json.dumps(
            {
                "t0": ["Solvable", "Solved"],
                "t1": ["Unsolvable", "Unsolved"],
                "t2": ["Unsure", "Unsure"],
            }
        )
    )
    for name in ("r1", "r2"):
        rc = cli.main(
            ["eval", "--mode", "legacy", "--tasks", str(tasks), "--states", str(states),
             "--output", str(tmp_path / name), "--seed", "11", "--repeats", "3"]
        )
        assert rc == 0
    first = (tmp_path / "r1" / "LegacyPR.json").read_bytes()
    second = (tmp_path / "r2" / "LegacyPR.json").read_bytes()
    assert first == second


def test_eval_legacy_with_reference_emits_win_report(tmp_path):
    tasks = _write_tasks(tmp_path, count=2)
    states = tmp_path / "states.json"
    ref_states = tmp_path / "ref_states.json"
    states.write_text(
        json.dumps({"t0": ["Solvable", "Solved"], "t1": ["Solvable", "Unsolved"]})
    )
    ref_states.write_text(
        json.dumps({"t0": ["Solvable", "Unsolved"], "t1": ["Solvable", "Solved"]})
    )
    rc = cli.main(
        ["eval", "--mode", "legacy", "--tasks", str(tasks), "--states", str(states),
         "--reference-states", str(ref_states), "--output", str(tmp_path / "report"),
         "--seed", "3", "--repeats", "1"]
    )
    assert rc == 0
    payload = json.loads((tmp_path / "report" / "LegacyWR.json").read_text())
    assert payload["per_task_verdicts"]["t0"] == ["Win"]
    assert payload["per_task_verdicts"]["t1"] == ["Lose"]


# -- serve subcommand -----------------------------------------------------------------


def test_serve_starts_with_valid_config(tmp_path):
    served = {}

    def fake_runner(app, host, port):
        served["host"] = host
        served["port"] = port

    config = _write_config(tmp_path, host="127.0.0.1", port=0)
    args = cli.build_parser().parse_args(["serve", "--config", str(config)])
    assert cli.cmd_serve(args, server_runner=fake_runner) == 0
    assert served["host"] == "127.0.0.1"


def test_serve_bad_cache_path_exits_nonzero_naming_path(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("file, not a directory")
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"cache_dir": str(blocker / "cache")}))
    rc = cli.main(["serve", "--config", str(config)])
    assert rc == 1
    err = capsys.readouterr().err
    assert "error: CacheIoError:" in err
    assert "blocker" in err


def test_serve_busy_port_exits_nonzero(tmp_path, capsys):
    blocker = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    blocker.bind(("127.0.0.1", 0))
    blocker.listen(1)
    port = blocker.getsockname()[1]
    try:
        config = _write_config(tmp_path, host="127.0.0.1", port=port)
        rc = cli.main(["serve", "--config", str(config)])
    finally:
        blocker.close()
    assert rc == 1
    assert "error: ConfigError:" in capsys.readouterr().err


def test_missing_config_file_is_single_line_error(tmp_path, capsys):
    rc = cli.main(["serve", "--config", str(tmp_path / "nope.json")])
    assert rc == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ConfigError:")
    assert "\n" not in err
