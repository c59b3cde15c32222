"""Client for the real tool-API hub.

Network outcomes are data, never exceptions: every transport failure and
non-2xx status is normalized into the (error, response) envelope with
enough failure detail for the classifier to land in the right bucket.
Only configuration problems raise.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import httpx

from .model import ApiResponse, CallRequest, ToolgateError, WireFormatError, parse_wire_response


class UpstreamConfigError(ToolgateError):
    """The client was asked to call without a usable configuration."""


@dataclass(frozen=True)
class UpstreamConfig:
    base_url: str
    service_key: str = ""
    key_header: str = "toolbench_key"
    timeout_s: float = 30.0
    retry_budget: int = 1
    max_in_flight: int = 8

    def __post_init__(self) -> None:
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


def _normalize(resp: httpx.Response) -> ApiResponse:
    """Turn an HTTP response into the wire envelope.

    Bodies that already are valid envelopes pass through verbatim; other
    2xx bodies are wrapped untouched.  Non-2xx statuses are encoded so the
    status code (and a keyword for 429/5xx) is visible to the classifier.
    """
    body = resp.text
    try:
        return parse_wire_response(body)
    except WireFormatError:
        pass
    if 200 <= resp.status_code < 300:
        return ApiResponse(error="", response=body)
    status = resp.status_code
    phrase = resp.reason_phrase or ""
    if status == 429:
        detail = f"rate limit: {status} {phrase}: {body}"
    elif status >= 500:
        detail = f"internal error: {status} {phrase}: {body}"
    else:
        detail = f"{status} {phrase}: {body}"
    return ApiResponse(error=f"upstream returned status {status}", response=detail)


class UpstreamClient:
    """Stateless per call; safe for concurrent use up to the in-flight cap.

    Retries apply only to transport-level failures (a dropped connection
    is noise); well-formed non-2xx responses are stable facts and are
    returned on the first attempt.
    """

    def __init__(self, config: UpstreamConfig, client: httpx.Client | None = None):
        if not config.base_url:
            raise UpstreamConfigError("upstream base_url is not configured")
        self.config = config
        self._sem = threading.BoundedSemaphore(config.max_in_flight)
        self._client = client or httpx.Client(timeout=config.timeout_s)

    def call(self, request: CallRequest) -> ApiResponse:
        headers = {}
        if self.config.service_key:
            headers[self.config.key_header] = self.config.service_key
        last_failure = ""
        for _ in range(self.config.retry_budget + 1):
            try:
                with self._sem:
                    resp = self._client.post(
                        self.config.base_url,
                        json=request.to_wire(),
                        headers=headers,
                    )
            except httpx.TimeoutException as exc:
                last_failure = (
                    f"connection timed out after {self.config.timeout_s}s: {exc}"
                )
                continue
            except httpx.HTTPError as exc:
                last_failure = f"connection failed: {exc}"
                continue
            return _normalize(resp)
        return ApiResponse(error="", response=last_failure)


def call_real(request: CallRequest, config: UpstreamConfig) -> ApiResponse:
    """One-shot convenience wrapper around UpstreamClient."""
    return UpstreamClient(config).call(request)
