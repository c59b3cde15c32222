"""toolgate: stable virtual tool-API gateway and benchmark evaluation harness."""

from .cache import CacheRecord, CacheStats, RecordSource, ResponseCache
from .classifier import ApiStatus, StatusReport, classify, is_cacheable
from .evaluation import (
    AnswerRecord,
    Judge,
    MetricReport,
    Task,
    judge_answer,
    judge_solvability,
    legacy_pass,
    legacy_win,
    sopr,
    sowr,
)
from .gateway import FaultMode, FaultPlan, Router, RouteTrace, Tier, make_fault_plan
from .llm import AuditLog, ChatModel, HttpChatBridge, RecordReplayBridge, StubBridge
from .model import (
    ApiDocumentation,
    ApiIdentifier,
    ApiResponse,
    CallRequest,
    Judgment,
    Solvability,
    SolvableVerdict,
    canonical_key,
    parse_wire_response,
)
from .simulator import SimulatorConfig, build_prompt, simulate
from .upstream import UpstreamClient, UpstreamConfig, call_real

__version__ = "0.1.0"

__all__ = [
    "AnswerRecord",
    "ApiDocumentation",
    "ApiIdentifier",
    "ApiResponse",
    "ApiStatus",
    "AuditLog",
    "CacheRecord",
    "CacheStats",
    "CallRequest",
    "ChatModel",
    "FaultMode",
    "FaultPlan",
    "HttpChatBridge",
    "Judge",
    "Judgment",
    "MetricReport",
    "RecordReplayBridge",
    "RecordSource",
    "ResponseCache",
    "RouteTrace",
    "Router",
    "SimulatorConfig",
    "Solvability",
    "SolvableVerdict",
    "StatusReport",
    "StubBridge",
    "Task",
    "Tier",
    "UpstreamClient",
    "UpstreamConfig",
    "build_prompt",
    "call_real",
    "canonical_key",
    "classify",
    "is_cacheable",
    "judge_answer",
    "judge_solvability",
    "legacy_pass",
    "legacy_win",
    "make_fault_plan",
    "parse_wire_response",
    "simulate",
    "sopr",
    "sowr",
]
