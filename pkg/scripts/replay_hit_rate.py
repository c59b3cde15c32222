#!/usr/bin/env python3
"""Cache hit-rate measurement under session replay.

Runs a seeded synthetic request session against a fresh gateway twice:
the first pass populates the cache from a scripted upstream, the second
replays the identical session with the upstream switched off.  Reports
per-pass hit rates and the resulting cache composition.

Usage:
    python scripts/replay_hit_rate.py --requests 500 --tools 40
"""

from __future__ import annotations

import argparse
import json
import random
import tempfile
from pathlib import Path

from toolgate.cache import ResponseCache
from toolgate.gateway import Router, Tier
from toolgate.model import ApiIdentifier, ApiResponse, CallRequest


def build_session(n_requests: int, n_tools: int, seed: int) -> list[CallRequest]:
    rng = random.Random(seed)
    return [
        CallRequest(
            id=ApiIdentifier("G", f"tool_{rng.randrange(n_tools)}", f"api_{rng.randrange(3)}"),
            tool_input=json.dumps({"q": rng.randrange(3 * n_tools)}),
        )
        for _ in range(n_requests)
    ]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--requests", type=int, default=500)
    parser.add_argument("--tools", type=int, default=40)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--output", type=Path)
    args = parser.parse_args()

    upstream_alive = {"up": True}

    def upstream(request: CallRequest) -> ApiResponse:
        if not upstream_alive["up"]:
            return ApiResponse(error="", response="connection refused: upstream retired")
        return ApiResponse(error="", response=f"live body for {request.id.tool_name}")

    def simulator(request: CallRequest) -> ApiResponse:
        return ApiResponse(error="", response=f"simulated body for {request.id.tool_name}")

    session = build_session(args.requests, args.tools, args.seed)
    report: dict[str, dict] = {}
    with tempfile.TemporaryDirectory() as tmp:
        cache = ResponseCache(Path(tmp) / "cache")
        router = Router(cache, upstream, simulator)

        for pass_name, kill_upstream in (("first_pass", False), ("second_pass", True)):
            if kill_upstream:
                upstream_alive["up"] = False
            cache.reset_counters()
            tiers = {tier: 0 for tier in Tier}
            for request in session:
                _, trace = router.route(request)
                tiers[trace.tier_served] += 1
            stats = cache.stats()
            report[pass_name] = {
                "hit_rate": stats.hit_rate,
                "hits": stats.hits,
                "misses": stats.misses,
                "served_by": {tier.value: count for tier, count in tiers.items() if count},
            }
        report["cache"] = cache.stats().to_json()

    for pass_name in ("first_pass", "second_pass"):
        entry = report[pass_name]
        print(
            f"{pass_name}: hit rate {entry['hit_rate']:.3f} "
            f"({entry['hits']} hits / {entry['misses']} misses), served by {entry['served_by']}"
        )
    print(f"cache records: {report['cache']['total']}")

    if args.output:
        args.output.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(f"wrote {args.output}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
