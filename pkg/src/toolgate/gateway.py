"""Three-tier routing (cache, real API, simulator) with seeded fault injection.

Tier order is strict: injected hard failure, then cache, then the real
hub, then the simulator.  Whatever the real or simulated tier produces is
written back to the cache when cacheable, so any later identical request
is served from the cache byte-identically regardless of upstream state.

Fault plans model upstream death at tool granularity (a tool bundles
several APIs).  HardFail returns the canonical failure envelope outright;
VirtualFallback skips only the real tier so downed tools are served by
the simulator.  The cache tier still serves hits for downed tools — the
cache is part of the benchmark, not the upstream — unless the router is
built with ``skip_cache_for_downed`` to test the stricter reading.
"""

from __future__ import annotations

import math
import random
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable

from .cache import RecordSource, ResponseCache
from .classifier import ApiStatus, classify
from .model import ApiResponse, CallRequest, failure_envelope


class FaultMode(Enum):
    HARD_FAIL = "hard_fail"
    VIRTUAL_FALLBACK = "virtual_fallback"


@dataclass(frozen=True)
class FaultPlan:
    """A seeded sample of tools declared unavailable."""

    proportion: float
    seed: int
    mode: FaultMode
    sampled_tools: frozenset[tuple[str, str]]

    def covers(self, tool: tuple[str, str]) -> bool:
        return tool in self.sampled_tools


def make_fault_plan(
    universe: Iterable[tuple[str, str]],
    proportion: float,
    seed: int,
    mode: FaultMode,
) -> FaultPlan:
    """Sample floor(proportion * |universe|) tools uniformly without replacement.

    Pure function of its arguments: the universe is sorted before
    sampling, so regenerating with the same seed reproduces the set.
    """
    if not 0.0 <= proportion <= 1.0:
        raise ValueError("proportion must be within [0, 1]")
    pool = sorted(set(universe))
    if not pool and proportion > 0:
        raise ValueError("universe must be non-empty unless proportion is 0")
    count = math.floor(proportion * len(pool))
    sampled = random.Random(seed).sample(pool, count)
    return FaultPlan(
        proportion=proportion, seed=seed, mode=mode, sampled_tools=frozenset(sampled)
    )


class Tier(Enum):
    CACHE = "cache"
    REAL = "real"
    SIMULATOR = "simulator"
    INJECTED_FAILURE = "injected_failure"


@dataclass(frozen=True)
class RouteTrace:
    tier_served: Tier
    persisted: bool
    latency_s: float


class Router:
    """Routes call requests through the tiers; fault-plan swaps are atomic.

    ``call_real`` may be None for deployments without hub access, in which
    case every miss goes straight to the simulator.
    """

    def __init__(
        self,
        cache: ResponseCache,
        call_real: Callable[[CallRequest], ApiResponse] | None,
        simulate: Callable[[CallRequest], ApiResponse],
        *,
        skip_cache_for_downed: bool = False,
    ):
        self._cache = cache
        self._call_real = call_real
        self._simulate = simulate
        self._skip_cache_for_downed = skip_cache_for_downed
        self._fault_lock = threading.Lock()
        self._fault: FaultPlan | None = None

    @property
    def cache(self) -> ResponseCache:
        return self._cache

    @property
    def fault_plan(self) -> FaultPlan | None:
        with self._fault_lock:
            return self._fault

    def install_fault_plan(self, plan: FaultPlan) -> None:
        with self._fault_lock:
            self._fault = plan

    def clear_fault_plan(self) -> None:
        with self._fault_lock:
            self._fault = None

    def route(
        self, request: CallRequest, fault: FaultPlan | None = None
    ) -> tuple[ApiResponse, RouteTrace]:
        """Serve one request; returns the envelope and where it came from.

        The installed fault plan applies unless an explicit one is given.
        """
        started = time.perf_counter()

        def trace(tier: Tier, persisted: bool) -> RouteTrace:
            return RouteTrace(
                tier_served=tier,
                persisted=persisted,
                latency_s=time.perf_counter() - started,
            )

        plan = fault if fault is not None else self.fault_plan
        down = plan is not None and plan.covers(request.id.as_tool())

        if down and plan.mode is FaultMode.HARD_FAIL:
            return failure_envelope(), trace(Tier.INJECTED_FAILURE, False)

        virtually_down = down and plan.mode is FaultMode.VIRTUAL_FALLBACK
        if not (virtually_down and self._skip_cache_for_downed):
            cached = self._cache.lookup(request)
            if cached is not None:
                return cached, trace(Tier.CACHE, False)

        if self._call_real is not None and not virtually_down:
            real = self._call_real(request)
            if classify(real) is ApiStatus.SUCCESS:
                persisted = self._cache.store(request, real, RecordSource.NEW_EXPERIMENT)
                return real, trace(Tier.REAL, persisted)

        simulated = self._simulate(request)
        persisted = self._cache.store(request, simulated, RecordSource.NEW_EXPERIMENT)
        return simulated, trace(Tier.SIMULATOR, persisted)
