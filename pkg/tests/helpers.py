"""Shared fixtures-in-code for the test suite: tiny factories and stubs."""

from __future__ import annotations

import json

from toolgate.model import (
    ApiDocumentation,
    ApiIdentifier,
    ApiParameter,
    ApiResponse,
    CallRequest,
)


def make_id(category="Logistics", tool="SQUAKE", api="Checkhealth") -> ApiIdentifier:
    return ApiIdentifier(category=category, tool_name=tool, api_name=api)


def make_request(
    category="Logistics", tool="SQUAKE", api="Checkhealth", tool_input="{}", strip=None
) -> CallRequest:
    return CallRequest(id=make_id(category, tool, api), tool_input=tool_input, strip=strip)


def make_doc(category="Logistics", tool="SQUAKE", api="Checkhealth") -> ApiDocumentation:
    return ApiDocumentation(
        id=make_id(category, tool, api),
        description=f"{api} endpoint of {tool}",
        parameters=(
            ApiParameter(name="q", type_label="string", description="query", required=False),
        ),
        tool_description=f"{tool} tool",
    )


def ok_envelope(text="ok") -> ApiResponse:
    return ApiResponse(error="", response=text)


def envelope_json(error="", response="ok") -> str:
    return json.dumps({"error": error, "response": response})


class ScriptedUpstream:
    """Maps canonical keys (or a default) to envelopes; records call counts."""

    def __init__(self, default: ApiResponse | None = None):
        from toolgate.model import canonical_key

        self._key_of = canonical_key
        self.by_key: dict[str, ApiResponse] = {}
        self.default = default
        self.calls = 0

    def set(self, request: CallRequest, response: ApiResponse) -> None:
        self.by_key[self._key_of(request)] = response

    def __call__(self, request: CallRequest) -> ApiResponse:
        self.calls += 1
        key = self._key_of(request)
        if key in self.by_key:
            return self.by_key[key]
        if self.default is not None:
            return self.default
        raise AssertionError(f"unscripted upstream call for key {key!r}")


class ScriptedSimulator:
    """Request-independent or per-key scripted simulator tier."""

    def __init__(self, default: ApiResponse):
        from toolgate.model import canonical_key

        self._key_of = canonical_key
        self.default = default
        self.by_key: dict[str, ApiResponse] = {}
        self.calls = 0

    def set(self, request: CallRequest, response: ApiResponse) -> None:
        self.by_key[self._key_of(request)] = response

    def __call__(self, request: CallRequest) -> ApiResponse:
        self.calls += 1
        return self.by_key.get(self._key_of(request), self.default)
