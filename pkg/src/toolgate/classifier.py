"""Keyword classification of call outcomes and the API status scanner.

Rules, applied in this fixed precedence (first match wins):

1. parsing error    - error text starts with "Function executing from"
2. not connected    - "HTTP" in the error text, or the response mentions
                      "HTTP error" / "connection" / "rate limit" /
                      "timed out" / "time out"
3. not authorised   - an authorisation keyword in either field, or a bare
                      401/403 code
4. not found        - a missing-endpoint keyword in either field, or a
                      bare 404 code
5. parameter change - "parameter" / "parse" / "is not defined" in either field
6. other            - any remaining outcome with a non-empty error text
7. success          - everything else

Matching is case-insensitive except ACCESS_DENIED, which is a verbatim
upstream token.  Bare status codes are digit triples bounded by non-digits
so that e.g. "4040" never counts as a 404.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Mapping

from .llm import BridgeUnavailable, extract_json_candidate
from .model import ApiDocumentation, ApiResponse, CallRequest, ToolgateError
from .prompts import load_prompt

if TYPE_CHECKING:  # pragma: no cover
    from .llm import ChatModel
    from .upstream import UpstreamClient


class ScanConfigError(ToolgateError):
    """The scanner was started without a usable upstream client."""


class ApiStatus(Enum):
    NOT_CONNECTED = "NotConnected"
    NOT_FOUND = "NotFound"
    PARAMETER_CHANGE = "ParameterChange"
    PARSING_ERROR = "ParsingError"
    NOT_AUTHORISED = "NotAuthorised"
    OTHER = "Other"
    SUCCESS = "Success"


# Statuses grouped the way scan reports are usually read: everything that
# is neither a success nor an authorisation failure counts as unavailable.
NOT_AVAILABLE_GROUP = frozenset(
    {
        ApiStatus.NOT_CONNECTED,
        ApiStatus.NOT_FOUND,
        ApiStatus.PARAMETER_CHANGE,
        ApiStatus.PARSING_ERROR,
        ApiStatus.OTHER,
    }
)

CACHEABLE_STATUSES = frozenset({ApiStatus.SUCCESS, ApiStatus.OTHER})

_PARSING_PREFIX = "function executing from"
_NOT_CONNECTED_RESPONSE = ("http error", "connection", "rate limit", "timed out", "time out")
_NOT_AUTHORISED = (
    "authoriz",
    "authoris",
    "unauthoriz",
    "unauthoris",
    "blocked user",
    "unsubscribe",
    "credential",
    "disabled for your subscription",
)
_NOT_FOUND = (
    "not found",
    "not available",
    "api doesn't exists",
    "service not found",
    "internal error",
)
_PARAMETER_CHANGE = ("parameter", "parse", "is not defined")

_CODE_MARKERS = {code: re.compile(rf"(?<!\d){code}(?!\d)") for code in ("401", "403", "404")}


def _has_code(text: str, code: str) -> bool:
    return bool(_CODE_MARKERS[code].search(text))


def classify(response: ApiResponse) -> ApiStatus:
    """Map an (error, response) pair to exactly one status; total function."""
    error_l = response.error.lower()
    body_l = response.response.lower()
    # Joined with a newline so a code split across the two fields cannot
    # produce a spurious digit-triple match.
    both = response.error + "\n" + response.response
    both_l = error_l + "\n" + body_l

    if error_l.startswith(_PARSING_PREFIX):
        return ApiStatus.PARSING_ERROR
    if "http" in error_l or any(k in body_l for k in _NOT_CONNECTED_RESPONSE):
        return ApiStatus.NOT_CONNECTED
    if (
        any(k in both_l for k in _NOT_AUTHORISED)
        or "ACCESS_DENIED" in both
        or _has_code(both, "401")
        or _has_code(both, "403")
    ):
        return ApiStatus.NOT_AUTHORISED
    if any(k in both_l for k in _NOT_FOUND) or _has_code(both, "404"):
        return ApiStatus.NOT_FOUND
    if any(k in both_l for k in _PARAMETER_CHANGE):
        return ApiStatus.PARAMETER_CHANGE
    if response.error:
        return ApiStatus.OTHER
    return ApiStatus.SUCCESS


def is_cacheable(status: ApiStatus) -> bool:
    """True for outcomes worth persisting: successes plus residual errors,
    the latter retained to keep some real-world exceptions in the store."""
    return status in CACHEABLE_STATUSES


@dataclass(frozen=True)
class StatusReport:
    """Aggregated classification counts for a set of probe calls."""

    counts: Mapping[ApiStatus, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def percentages(self) -> dict[ApiStatus, float]:
        total = self.total
        if total == 0:
            return {status: 0.0 for status in ApiStatus}
        return {status: self.counts.get(status, 0) / total for status in ApiStatus}

    def grouped(self) -> dict[str, int]:
        """Success / NotAvailable / NotAuthorised roll-up."""
        return {
            "Success": self.counts.get(ApiStatus.SUCCESS, 0),
            "NotAvailable": sum(self.counts.get(s, 0) for s in NOT_AVAILABLE_GROUP),
            "NotAuthorised": self.counts.get(ApiStatus.NOT_AUTHORISED, 0),
        }

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "counts": {s.value: self.counts.get(s, 0) for s in ApiStatus},
            "percentages": {s.value: p for s, p in self.percentages.items()},
            "grouped": self.grouped(),
        }

    def render_table(self) -> str:
        lines = [f"{'status':<16} {'count':>8} {'share':>8}"]
        for status in ApiStatus:
            count = self.counts.get(status, 0)
            share = self.percentages[status]
            lines.append(f"{status.value:<16} {count:>8} {share:>7.1%}")
        lines.append(f"{'total':<16} {self.total:>8}")
        return "\n".join(lines)

    @classmethod
    def from_statuses(cls, statuses: Iterable[ApiStatus]) -> "StatusReport":
        return cls(counts=dict(Counter(statuses)))


def _write_probe_call(
    doc: ApiDocumentation, call_writer: "ChatModel", retry_budget: int
) -> CallRequest | None:
    """Ask the call writer for one probe input; None when it never parses."""
    system = load_prompt("call_writing_system")
    user = (
        "API Documentation:\n"
        + json.dumps(doc.to_prompt_payload(), ensure_ascii=False)
        + "\none more API Input example:"
    )
    for _ in range(retry_budget + 1):
        try:
            completion = call_writer.complete(system, user)
        except BridgeUnavailable:
            continue
        candidate = extract_json_candidate(completion)
        try:
            payload = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(payload, dict):
            return CallRequest(
                id=doc.id,
                tool_input=json.dumps(payload, ensure_ascii=False),
            )
    return None


def scan_status(
    docs: list[ApiDocumentation],
    call_writer: "ChatModel",
    upstream: "UpstreamClient",
    *,
    retry_budget: int = 2,
    max_workers: int = 4,
) -> StatusReport:
    """Probe every documented API once and aggregate the classified outcomes.

    One probe call is generated per API via the call-writing prompt and
    executed against the upstream hub.  APIs whose probe input cannot be
    generated within the retry budget are counted under ParsingError.
    Probes run with bounded parallelism and are reduced order-independently.
    """
    if upstream is None:
        raise ScanConfigError("scan requires a configured upstream client")
    for doc in docs:
        if not doc.description.strip():
            raise ValueError(f"documentation for {doc.id} has an empty description")
    if not docs:
        return StatusReport(counts={})

    def probe(doc: ApiDocumentation) -> ApiStatus:
        request = _write_probe_call(doc, call_writer, retry_budget)
        if request is None:
            return ApiStatus.PARSING_ERROR
        return classify(upstream.call(request))

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        statuses = list(pool.map(probe, docs))
    return StatusReport.from_statuses(statuses)
