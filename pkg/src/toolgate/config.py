"""Service configuration: JSON file in, frozen dataclasses out.

Secrets never live in the file; settings name the environment variables
that hold them (provider keys, hub key) and assembly resolves them.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .model import ToolgateError
from .simulator import SimulatorConfig
from .upstream import UpstreamConfig


class ConfigError(ToolgateError):
    """The configuration file is missing, malformed or inconsistent."""


@dataclass(frozen=True)
class UpstreamSettings:
    base_url: str
    key_env: str = "TOOLBENCH_KEY"
    key_header: str = "toolbench_key"
    timeout_s: float = 30.0
    retry_budget: int = 1
    max_in_flight: int = 8

    def to_upstream_config(self) -> UpstreamConfig:
        return UpstreamConfig(
            base_url=self.base_url,
            service_key=os.environ.get(self.key_env, ""),
            key_header=self.key_header,
            timeout_s=self.timeout_s,
            retry_budget=self.retry_budget,
            max_in_flight=self.max_in_flight,
        )


@dataclass(frozen=True)
class BridgeSettings:
    endpoint: str
    api_key_env: str = "LLM_API_KEY"
    timeout_s: float = 60.0
    retry_budget: int = 3
    backoff_s: float = 0.5
    max_in_flight: int = 4
    audit_log: str | None = None
    record_dir: str | None = None


@dataclass(frozen=True)
class JudgeSettings:
    solvability_models: tuple[str, ...] = ("gpt-4-turbo", "gemini-pro", "claude-2")
    evaluator_model: str = "gpt-4-turbo"
    temperature: float = 0.0
    vote_threshold: str = "majority"  # or "unanimous"
    repeats: int = 3

    def __post_init__(self) -> None:
        if self.vote_threshold not in ("majority", "unanimous"):
            raise ConfigError("vote_threshold must be 'majority' or 'unanimous'")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")


@dataclass(frozen=True)
class ServiceConfig:
    cache_dir: str
    host: str = "127.0.0.1"
    port: int = 8080
    docs_dir: str | None = None
    prompt_dir: str | None = None
    debug_traces: bool = False
    strict_fault_cache_skip: bool = False
    upstream: UpstreamSettings | None = None
    bridge: BridgeSettings | None = None
    simulator: SimulatorConfig = field(default_factory=SimulatorConfig)
    judges: JudgeSettings = field(default_factory=JudgeSettings)


def _build(section: dict, cls, name: str):
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(f"bad {name} section: {exc}") from exc


def load_config(path: str | Path) -> ServiceConfig:
    """Read and validate a service configuration file."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config {path} is not valid JSON (line {exc.lineno}): {exc.msg}"
        ) from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    if "cache_dir" not in payload:
        raise ConfigError(f"config {path} is missing required key 'cache_dir'")

    upstream = payload.pop("upstream", None)
    bridge = payload.pop("bridge", None)
    simulator = payload.pop("simulator", None)
    judges = payload.pop("judges", None)
    if judges and "solvability_models" in judges:
        judges["solvability_models"] = tuple(judges["solvability_models"])
    try:
        config = ServiceConfig(
            **payload,
            upstream=_build(upstream, UpstreamSettings, "upstream") if upstream else None,
            bridge=_build(bridge, BridgeSettings, "bridge") if bridge else None,
            simulator=(
                _build(simulator, SimulatorConfig, "simulator")
                if simulator
                else SimulatorConfig()
            ),
            judges=_build(judges, JudgeSettings, "judges") if judges else JudgeSettings(),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config {path}: {exc}") from exc
    return config
