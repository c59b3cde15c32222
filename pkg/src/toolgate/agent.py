"""Minimal chain-of-thought driver used to exercise the gateway end to end.

One loop: propose a call, observe the envelope, repeat, answer.  This is
deliberately the simplest possible agent — it exists for smoke tests and
stability experiments, not as a competitive inference method.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import httpx

from .evaluation import AnswerRecord, Task
from .llm import LlmBridge, extract_json_candidate
from .model import ApiDocumentation, ApiIdentifier, CallRequest, ApiResponse, ToolgateError
from .prompts import load_prompt


class GatewayError(ToolgateError):
    """The gateway is unreachable or refused the call."""


class GatewayClient:
    """Thin client for the gateway HTTP surface.

    Accepts any httpx-compatible client, which includes in-process ASGI
    test clients.
    """

    def __init__(self, client: httpx.Client):
        self._client = client

    def call(self, request: CallRequest) -> ApiResponse:
        try:
            resp = self._client.post("/call", json=request.to_wire())
        except httpx.HTTPError as exc:
            raise GatewayError(f"gateway unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise GatewayError(
                f"gateway refused call with status {resp.status_code}: {resp.text[:200]}"
            )
        payload = resp.json()
        return ApiResponse(
            error=str(payload.get("error", "")),
            response=str(payload.get("response", "")),
        )

    def healthy(self) -> bool:
        try:
            return self._client.get("/health").status_code == 200
        except httpx.HTTPError:
            return False

    def install_fault(
        self,
        proportion: float,
        seed: int,
        mode: str,
        tools: list[tuple[str, str]] | None = None,
    ) -> dict:
        body: dict = {"proportion": proportion, "seed": seed, "mode": mode}
        if tools is not None:
            body["tools"] = [list(pair) for pair in tools]
        resp = self._client.post("/fault", json=body)
        if resp.status_code != 200:
            raise GatewayError(f"fault install failed: {resp.text[:200]}")
        return resp.json()

    def clear_fault(self) -> None:
        self._client.delete("/fault")


@dataclass(frozen=True)
class AgentConfig:
    model_name: str
    temperature: float = 0.0
    step_budget: int = 6
    method_label: str = "cot"


def run_task(
    task: Task,
    docs: list[ApiDocumentation],
    gateway: GatewayClient,
    bridge: LlmBridge,
    config: AgentConfig,
    *,
    prompt_dir: str | None = None,
) -> AnswerRecord:
    """Drive one task through the loop and return its transcript.

    The transcript carries no timestamps, so runs with deterministic
    stubs are byte-identical.
    """
    system = load_prompt("agent_system", override_dir=prompt_dir)
    docs_line = json.dumps([d.to_prompt_payload() for d in docs], ensure_ascii=False)
    conversation = [f"Task:\n{task.query}", f"Available APIs:\n{docs_line}"]
    steps: list[dict] = []
    final_answer = ""
    finished = False
    for step_no in range(1, config.step_budget + 1):
        completion = bridge.complete(
            system,
            "\n\n".join(conversation),
            model_name=config.model_name,
            temperature=config.temperature,
        )
        try:
            move = json.loads(extract_json_candidate(completion))
        except json.JSONDecodeError:
            steps.append({"step": step_no, "unparseable": completion})
            break
        if not isinstance(move, dict):
            steps.append({"step": step_no, "unparseable": completion})
            break
        if move.get("action") == "finish":
            final_answer = str(move.get("final_answer", ""))
            finished = True
            steps.append({"step": step_no, "thought": move.get("thought", ""), "finish": True})
            break
        if move.get("action") == "call":
            try:
                request = CallRequest(
                    id=ApiIdentifier(
                        str(move.get("category", "")),
                        str(move.get("tool_name", "")),
                        str(move.get("api_name", "")),
                    ),
                    tool_input=str(move.get("tool_input", "")),
                )
            except ValueError:
                steps.append({"step": step_no, "bad_call": move})
                break
            envelope = gateway.call(request)
            observation = envelope.to_wire()
            steps.append(
                {
                    "step": step_no,
                    "thought": move.get("thought", ""),
                    "call": request.to_wire(),
                    "observation": observation,
                }
            )
            conversation.append(f"Observation {step_no}:\n{observation}")
            continue
        steps.append({"step": step_no, "unparseable": completion})
        break
    solution_path = json.dumps(
        {"steps": steps, "finished": finished}, ensure_ascii=False
    )
    return AnswerRecord(
        task_id=task.task_id,
        method_label=config.method_label,
        final_answer=final_answer,
        solution_path=solution_path,
    )
