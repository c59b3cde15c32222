"""HTTP surface of the gateway.

Endpoints:
    POST   /call    {category, tool_name, api_name, tool_input, strip} -> envelope
    GET    /health  liveness probe
    GET    /stats   cache statistics
    POST   /fault   {proportion, seed, mode, tools?} install a fault plan
    DELETE /fault   clear the fault plan

Every call outcome is a 200 envelope; requests that cannot be keyed are
400, and a dead simulation backend surfaces as 502 with a structured
error body.  With ``debug_traces`` enabled the envelope carries a
``_trace`` object naming the serving tier.
"""

from __future__ import annotations

import logging
import os
from typing import Optional

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .cache import ResponseCache
from .config import ServiceConfig
from .gateway import FaultMode, Router, make_fault_plan
from .llm import AuditLog, HttpChatBridge, LlmBridge, RecordReplayBridge
from .model import (
    ApiDocumentation,
    ApiIdentifier,
    CallRequest,
    KeyDerivationError,
    docs_by_id,
    load_documentation,
)
from .simulator import SimulatorUnavailable, simulate
from .upstream import UpstreamClient

logger = logging.getLogger(__name__)


class CallBody(BaseModel):
    category: str
    tool_name: str
    api_name: str
    tool_input: str = ""
    strip: Optional[str] = None


class FaultBody(BaseModel):
    proportion: float = Field(ge=0.0, le=1.0)
    seed: int = 0
    mode: str = FaultMode.VIRTUAL_FALLBACK.value
    tools: Optional[list[tuple[str, str]]] = None


def build_app(router: Router, *, debug_traces: bool = False) -> FastAPI:
    """Wire a routing core into the HTTP application."""
    app = FastAPI(title="toolgate", docs_url=None, redoc_url=None)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok"}

    @app.get("/stats")
    def stats() -> dict:
        return router.cache.stats().to_json()

    @app.post("/call")
    def call(body: CallBody) -> JSONResponse:
        try:
            request = CallRequest(
                id=ApiIdentifier(body.category, body.tool_name, body.api_name),
                tool_input=body.tool_input,
                strip=body.strip,
            )
        except ValueError as exc:
            return JSONResponse(
                status_code=400,
                content={"error_class": "InvalidRequest", "detail": str(exc)},
            )
        try:
            response, trace = router.route(request)
        except KeyDerivationError as exc:
            return JSONResponse(
                status_code=400,
                content={"error_class": "KeyDerivationError", "detail": str(exc)},
            )
        except SimulatorUnavailable as exc:
            return JSONResponse(
                status_code=502,
                content={"error_class": "SimulatorUnavailable", "detail": str(exc)},
            )
        payload: dict = {"error": response.error, "response": response.response}
        if debug_traces:
            payload["_trace"] = {
                "tier": trace.tier_served.value,
                "persisted": trace.persisted,
                "latency_s": trace.latency_s,
            }
        return JSONResponse(status_code=200, content=payload)

    @app.post("/fault")
    def install_fault(body: FaultBody) -> JSONResponse:
        try:
            mode = FaultMode(body.mode)
        except ValueError:
            return JSONResponse(
                status_code=400,
                content={
                    "error_class": "InvalidFaultPlan",
                    "detail": f"mode must be one of {[m.value for m in FaultMode]}",
                },
            )
        universe = (
            {tuple(pair) for pair in body.tools}
            if body.tools is not None
            else router.cache.success_tools()
        )
        try:
            plan = make_fault_plan(universe, body.proportion, body.seed, mode)
        except ValueError as exc:
            return JSONResponse(
                status_code=400,
                content={"error_class": "InvalidFaultPlan", "detail": str(exc)},
            )
        router.install_fault_plan(plan)
        return JSONResponse(
            status_code=200,
            content={
                "mode": plan.mode.value,
                "proportion": plan.proportion,
                "seed": plan.seed,
                "sampled_count": len(plan.sampled_tools),
                "sampled_tools": sorted(plan.sampled_tools),
            },
        )

    @app.delete("/fault")
    def clear_fault() -> dict:
        router.clear_fault_plan()
        return {"cleared": True}

    return app


def assemble_router(
    config: ServiceConfig,
    *,
    bridge: LlmBridge | None = None,
    docs: list[ApiDocumentation] | None = None,
) -> Router:
    """Build the routing core from configuration.

    ``bridge`` and ``docs`` may be injected (tests, scripts); otherwise
    they come from the config's bridge settings and docs_dir.
    """
    cache = ResponseCache(config.cache_dir)

    upstream_call = None
    if config.upstream is not None:
        client = UpstreamClient(config.upstream.to_upstream_config())
        upstream_call = client.call

    if bridge is None and config.bridge is not None:
        audit = AuditLog(config.bridge.audit_log) if config.bridge.audit_log else None
        bridge = HttpChatBridge(
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

    if docs is None and config.docs_dir is not None:
        docs = load_documentation(config.docs_dir)
    documentation = docs_by_id(docs) if docs else {}

    if bridge is None:

        def simulate_fn(request: CallRequest):
            raise SimulatorUnavailable("no simulation backend configured")

    else:
        pinned_bridge = bridge

        def simulate_fn(request: CallRequest):
            return simulate(
                request,
                documentation.get(request.id),
                cache,
                pinned_bridge,
                config.simulator,
                prompt_dir=config.prompt_dir,
            )

    return Router(
        cache,
        upstream_call,
        simulate_fn,
        skip_cache_for_downed=config.strict_fault_cache_skip,
    )
