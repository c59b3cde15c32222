#!/usr/bin/env python3
"""Desk-scale fault-injection sweep.

Builds a synthetic task group backed by scripted upstream/simulator tiers,
sweeps fault proportions in both injection modes, and reports the score
curve: flat under virtual fallback, degrading under hard failure.
Everything is seeded and stubbed, so reruns are byte-identical.

Usage:
    python scripts/fault_sweep.py --output sweep.json
"""

from __future__ import annotations

import argparse
import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from toolgate.agent import AgentConfig, GatewayClient, run_task
from toolgate.cache import ResponseCache
from toolgate.evaluation import Judge, Task, judge_answer, sopr
from toolgate.gateway import FaultMode, Router
from toolgate.llm import ChatModel, StubBridge
from toolgate.model import (
    NO_USEFUL_INFORMATION,
    ApiDocumentation,
    ApiIdentifier,
)
from toolgate.service import build_app


def scripted_agent(system, user, model, temp):
    """One call to the first documented API, then answer with the observation."""
    if "Observation 1:" in user:
        observation = user.split("Observation 1:\n", 1)[1].split("\n", 1)[0]
        payload = json.loads(observation)
        return json.dumps(
            {"thought": "done", "action": "finish",
             "final_answer": f"Result: {payload['response']}"}
        )
    docs = json.loads(user.split("Available APIs:\n", 1)[1].split("\n\n", 1)[0])
    doc = docs[0]
    return json.dumps(
        {"thought": "probe", "action": "call", "category": doc["category"],
         "tool_name": doc["tool_name"], "api_name": doc["api_name"], "tool_input": "{}"}
    )


def run_group(workdir: Path, n_tasks: int, mode: str, proportion: float, seed: int) -> float:
    tools = [("G1", f"tool_{i:03d}") for i in range(n_tasks)]
    tasks = [
        Task(
            task_id=f"task_{i:03d}",
            query=f"fetch record {i}",
            available_tools=(ApiIdentifier("G1", f"tool_{i:03d}", "fetch"),),
            group="I1-Instruction",
        )
        for i in range(n_tasks)
    ]
    docs = [
        ApiDocumentation(
            id=ApiIdentifier("G1", f"tool_{i:03d}", "fetch"),
            description="fetch one record",
            tool_description="synthetic tool",
        )
        for i in range(n_tasks)
    ]

    cache = ResponseCache(workdir / f"cache-{mode}-{int(proportion * 100)}")
    router = Router(
        cache,
        lambda request: _ok(f"data for {request.id.tool_name}"),
        lambda request: _ok(f"simulated data for {request.id.tool_name}"),
    )
    gateway = GatewayClient(TestClient(build_app(router)))
    gateway.install_fault(proportion, seed=seed, mode=mode, tools=tools)

    agent = StubBridge(scripted_agent)
    judge = Judge(
        label="stub-judge",
        model=ChatModel(
            StubBridge(lambda s, u, m, t: "Unsolved" if NO_USEFUL_INFORMATION in u else "Solved"),
            "stub-judge",
        ),
    )
    verdicts = {}
    for i, task in enumerate(tasks):
        record = run_task(task, [docs[i]], gateway, agent,
                          AgentConfig(model_name="stub-agent", step_budget=3))
        verdicts[task.task_id] = [judge_answer(task, record, judge)]
    return sopr(verdicts).per_group["all"].mean


def _ok(text: str):
    from toolgate.model import ApiResponse

    return ApiResponse(error="", response=text)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--tasks", type=int, default=50)
    parser.add_argument("--seed", type=int, default=2024)
    parser.add_argument("--proportions", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.5])
    parser.add_argument("--output", type=Path)
    args = parser.parse_args()

    results: dict[str, dict[str, float]] = {}
    with tempfile.TemporaryDirectory() as tmp:
        for mode in (FaultMode.VIRTUAL_FALLBACK.value, FaultMode.HARD_FAIL.value):
            results[mode] = {
                f"{p:.0%}": run_group(Path(tmp), args.tasks, mode, p, args.seed)
                for p in args.proportions
            }

    header = ["mode"] + [f"{p:.0%}" for p in args.proportions]
    print("  ".join(f"{h:>18}" for h in header))
    for mode, scores in results.items():
        row = [mode] + [f"{scores[f'{p:.0%}']:.1f}" for p in args.proportions]
        print("  ".join(f"{c:>18}" for c in row))

    if args.output:
        args.output.write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")
        print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
