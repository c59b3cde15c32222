"""Shared domain vocabulary: requests, responses, documentation and verdicts.

Everything here is an immutable value object, freely shareable across
threads.  The wire format for envelopes, keys and dumps is UTF-8 JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

# Joins the segments of a canonical request key.  A non-printing unit
# separator is used because category/tool/API names routinely contain
# ordinary punctuation.
KEY_SEPARATOR = "\x1f"

# Body of the envelope served for dead or injected-failure APIs.
NO_USEFUL_INFORMATION = "This API did not return any useful information..."


class ToolgateError(Exception):
    """Base class for every deliberate error raised by this package."""


class KeyDerivationError(ToolgateError):
    """tool_input is neither empty nor a JSON object, so no key exists."""


class WireFormatError(ToolgateError):
    """Text is not a valid (error, response) envelope."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class ApiIdentifier:
    """Identity of one callable API: (category, tool, API name).

    Equality is case-sensitive exact match on all three fields.
    """

    category: str
    tool_name: str
    api_name: str

    def __post_init__(self) -> None:
        for name in ("category", "tool_name", "api_name"):
            value = getattr(self, name)
            if not value.strip():
                raise ValueError(f"{name} must be non-empty")
            if KEY_SEPARATOR in value:
                raise ValueError(f"{name} must not contain the key separator")

    def as_tool(self) -> tuple[str, str]:
        """The (category, tool) pair; fault injection works at this grain."""
        return (self.category, self.tool_name)


@dataclass(frozen=True)
class CallRequest:
    """One tool-API invocation: an endpoint plus its serialized arguments.

    ``tool_input`` is kept verbatim; validity is only enforced when a
    canonical key is derived, so malformed traffic can still be observed.
    """

    id: ApiIdentifier
    tool_input: str = ""
    strip: str | None = None

    def to_wire(self) -> dict:
        payload = {
            "category": self.id.category,
            "tool_name": self.id.tool_name,
            "api_name": self.id.api_name,
            "tool_input": self.tool_input,
        }
        if self.strip is not None:
            payload["strip"] = self.strip
        return payload

    @classmethod
    def from_wire(cls, payload: dict) -> "CallRequest":
        return cls(
            id=ApiIdentifier(
                category=str(payload["category"]),
                tool_name=str(payload["tool_name"]),
                api_name=str(payload["api_name"]),
            ),
            tool_input=str(payload.get("tool_input", "")),
            strip=payload.get("strip"),
        )


@dataclass(frozen=True)
class ApiResponse:
    """The uniform wire envelope.

    Both fields are always present; the empty string is the neutral value.
    An empty ``error`` means no transport or processing error occurred.
    """

    error: str = ""
    response: str = ""

    def to_wire(self) -> str:
        return json.dumps(
            {"error": self.error, "response": self.response}, ensure_ascii=False
        )


def failure_envelope() -> ApiResponse:
    """The canonical envelope returned for an API that yields nothing useful."""
    return ApiResponse(error="", response=NO_USEFUL_INFORMATION)


def parse_wire_response(raw: str) -> ApiResponse:
    """Parse an envelope from raw text.

    Requires a JSON object with text fields ``error`` and ``response``;
    extra fields are ignored.  Raises WireFormatError (carrying the raw
    text) otherwise.
    """
    try:
        payload = json.loads(raw)
    except (json.JSONDecodeError, TypeError) as exc:
        raise WireFormatError(f"envelope is not valid JSON: {exc}", raw=raw) from exc
    if not isinstance(payload, dict):
        raise WireFormatError("envelope must be a JSON object", raw=raw)
    for field_name in ("error", "response"):
        if field_name not in payload:
            raise WireFormatError(f"envelope missing field {field_name!r}", raw=raw)
        if not isinstance(payload[field_name], str):
            raise WireFormatError(
                f"envelope field {field_name!r} must be a string", raw=raw
            )
    return ApiResponse(error=payload["error"], response=payload["response"])


def canonical_arguments(tool_input: str) -> str:
    """Re-serialize an argument object canonically.

    Object keys are sorted recursively; array order is preserved (arrays
    are positional in API semantics, objects are not).  Empty or
    whitespace-only input is treated as the empty object.
    """
    if not tool_input.strip():
        return "{}"
    try:
        payload = json.loads(tool_input)
    except json.JSONDecodeError as exc:
        raise KeyDerivationError(
            f"tool_input is not a JSON object: {exc}"
        ) from exc
    if not isinstance(payload, dict):
        raise KeyDerivationError(
            f"tool_input must be a JSON object, got {type(payload).__name__}"
        )
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_key(request: CallRequest) -> str:
    """Deterministic text key for a request: identifier plus canonical args.

    Identical semantic requests yield identical keys; pure function.
    """
    return KEY_SEPARATOR.join(
        (
            request.id.category,
            request.id.tool_name,
            request.id.api_name,
            canonical_arguments(request.tool_input),
        )
    )


@dataclass(frozen=True)
class ApiParameter:
    name: str
    type_label: str = ""
    description: str = ""
    required: bool = False


@dataclass(frozen=True)
class ApiDocumentation:
    """Documentation for one API: its description and parameter list."""

    id: ApiIdentifier
    description: str = ""
    parameters: tuple[ApiParameter, ...] = ()
    tool_description: str = ""

    def __post_init__(self) -> None:
        names = [p.name for p in self.parameters]
        if len(names) != len(set(names)):
            raise ValueError("parameter names must be unique within one document")

    def to_prompt_payload(self) -> dict:
        """Shape handed to LLM prompts (simulation, call writing)."""
        return {
            "category": self.id.category,
            "tool_name": self.id.tool_name,
            "api_name": self.id.api_name,
            "tool_description": self.tool_description,
            "description": self.description,
            "parameters": [
                {
                    "name": p.name,
                    "type": p.type_label,
                    "description": p.description,
                    "required": p.required,
                }
                for p in self.parameters
            ],
        }


class Judgment(Enum):
    """Per-answer verdict from the evaluator."""

    SOLVED = "Solved"
    UNSOLVED = "Unsolved"
    UNSURE = "Unsure"


class SolvableVerdict(Enum):
    SOLVABLE = "Solvable"
    UNSOLVABLE = "Unsolvable"


@dataclass(frozen=True)
class Solvability:
    """Aggregated solvability vote with the per-judge breakdown."""

    verdict: SolvableVerdict
    per_judge: tuple[tuple[str, SolvableVerdict], ...]


def load_documentation(root: str | Path) -> list[ApiDocumentation]:
    """Read API documentation from a directory tree.

    Layout: one JSON document per tool under category directories,
    ``<root>/<category>/<tool>.json`` with shape::

        {"tool_name": ..., "tool_description": ...,
         "apis": [{"name": ..., "description": ...,
                   "parameters": [{"name", "type", "description", "required"}]}]}

    Results are sorted by (category, tool, api) so scans are reproducible.
    """
    root = Path(root)
    docs: list[ApiDocumentation] = []
    for doc_path in sorted(root.glob("*/*.json")):
        category = doc_path.parent.name
        try:
            payload = json.loads(doc_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ToolgateError(f"{doc_path}: unreadable documentation: {exc}") from exc
        tool_name = str(payload.get("tool_name") or doc_path.stem)
        tool_description = str(payload.get("tool_description", ""))
        for api in payload.get("apis", []):
            params = tuple(
                ApiParameter(
                    name=str(p["name"]),
                    type_label=str(p.get("type", "")),
                    description=str(p.get("description", "")),
                    required=bool(p.get("required", False)),
                )
                for p in api.get("parameters", [])
            )
            docs.append(
                ApiDocumentation(
                    id=ApiIdentifier(category, tool_name, str(api["name"])),
                    description=str(api.get("description", "")),
                    parameters=params,
                    tool_description=tool_description,
                )
            )
    return docs


def docs_by_id(docs: list[ApiDocumentation]) -> dict[ApiIdentifier, ApiDocumentation]:
    return {doc.id: doc for doc in docs}
