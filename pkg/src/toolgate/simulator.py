"""LLM-backed API mocking for endpoints the cache and the real hub cannot serve.

The model is prompted with the API documentation plus up to five cached
request/response pairs as few-shot examples, and must answer with a bare
envelope object.  Completions that never parse within the retry budget
degrade to the canonical failure envelope so downstream behaviour matches
a dead API.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import TYPE_CHECKING

from .llm import BridgeUnavailable, LlmBridge, extract_json_candidate
from .model import (
    ApiDocumentation,
    ApiResponse,
    CallRequest,
    ToolgateError,
    WireFormatError,
    failure_envelope,
    parse_wire_response,
)
from .prompts import load_prompt

if TYPE_CHECKING:  # pragma: no cover
    from .cache import ResponseCache


class SimulatorUnavailable(ToolgateError):
    """The simulation backend cannot run at all (transport or missing docs).

    Distinct from a parseable-but-useless completion, which degrades to
    the canonical failure envelope instead.
    """


@dataclass(frozen=True)
class SimulatorConfig:
    model_name: str = "gpt-4-turbo-preview"
    temperature: float = 0.1
    max_examples: int = 5
    parse_retry_budget: int = 2

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_examples < 0:
            raise ValueError("max_examples must be >= 0")
        if self.parse_retry_budget < 0:
            raise ValueError("parse_retry_budget must be >= 0")


def build_prompt(
    doc: ApiDocumentation,
    examples: list[tuple[CallRequest, ApiResponse]],
    request: CallRequest,
    *,
    prompt_dir: str | None = None,
) -> tuple[str, str]:
    """Render the (system, user) prompt pair; pure and byte-deterministic.

    Callers are expected to pass at most the configured example budget.
    The examples section is omitted entirely when there are none.
    """
    system = load_prompt("api_simulation_system", override_dir=prompt_dir)
    parts = [
        "API Documentation:",
        json.dumps(doc.to_prompt_payload(), ensure_ascii=False),
    ]
    if examples:
        parts.append("API Examples:")
        for i, (example_request, example_response) in enumerate(examples, start=1):
            parts.append(f"Example input {i}: {example_request.tool_input or '{}'}")
            parts.append(f"Example response {i}: {example_response.to_wire()}")
    parts.append("API input:")
    parts.append(json.dumps(request.to_wire(), ensure_ascii=False))
    return system, "\n".join(parts)


def simulate(
    request: CallRequest,
    doc: ApiDocumentation | None,
    cache: "ResponseCache | None",
    bridge: LlmBridge,
    config: SimulatorConfig,
    *,
    prompt_dir: str | None = None,
) -> ApiResponse:
    """Synthesize a plausible envelope for the request.

    Raises SimulatorUnavailable when documentation is missing (inventing a
    schema would be worse than refusing) or when the provider stays
    unreachable past its own retry budget.
    """
    if doc is None:
        raise SimulatorUnavailable(
            f"no documentation for {request.id}; refusing to invent a schema"
        )
    if doc.id != request.id:
        raise ValueError(f"documentation {doc.id} does not match request {request.id}")
    examples = (
        cache.examples_for(request.id, config.max_examples) if cache is not None else []
    )
    system, user = build_prompt(doc, examples, request, prompt_dir=prompt_dir)
    for _ in range(config.parse_retry_budget + 1):
        try:
            completion = bridge.complete(
                system,
                user,
                model_name=config.model_name,
                temperature=config.temperature,
            )
        except BridgeUnavailable as exc:
            raise SimulatorUnavailable(f"simulation backend unreachable: {exc}") from exc
        candidate = extract_json_candidate(completion)
        try:
            return parse_wire_response(candidate)
        except WireFormatError:
            continue
    return failure_envelope()
