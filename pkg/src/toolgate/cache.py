"""Persistent response store keyed by canonical request keys.

First tier of the gateway and the few-shot example source for the
simulator.  The store is append-only by design: collisions keep the first
value so recorded behaviour never silently changes, and there is no TTL
or eviction.

On-disk layout is one JSON file per (category, tool) —
``<root>/<category>/<tool>.json`` with percent-encoded names — mapping
api_name to the list of stored records in insertion order.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping
from urllib.parse import quote, unquote

from .classifier import ApiStatus, classify, is_cacheable
from .model import (
    ApiIdentifier,
    ApiResponse,
    CallRequest,
    KeyDerivationError,
    ToolgateError,
    canonical_arguments,
    canonical_key,
    parse_wire_response,
)


class CacheIoError(ToolgateError):
    """A cache file could not be read or written."""


class ImportFormatError(ToolgateError):
    """A record dump did not match the documented layout."""


class RecordSource(Enum):
    TRAIN_SET = "train"
    TEST_SET = "test"
    NEW_EXPERIMENT = "new"


@dataclass(frozen=True)
class CacheRecord:
    key: str
    request: CallRequest
    response: ApiResponse
    status: ApiStatus
    source: RecordSource
    stored_at: str


@dataclass(frozen=True)
class CacheStats:
    per_source_counts: Mapping[RecordSource, int]
    total: int
    hits: int
    misses: int

    @property
    def hit_rate(self) -> float:
        looked_up = self.hits + self.misses
        return self.hits / looked_up if looked_up else 0.0

    def to_json(self) -> dict:
        return {
            "per_source_counts": {s.value: self.per_source_counts.get(s, 0) for s in RecordSource},
            "total": self.total,
            "hits": self.hits,
            "misses": self.misses,
            "hit_rate": self.hit_rate,
        }


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ResponseCache:
    """Thread-safe persistent cache of API responses.

    Lookups never observe partial writes; concurrent stores to the same
    key serialize with first-write-wins; imports are exclusive.  Hit and
    miss counters are process-lifetime measurements, not persisted state.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise CacheIoError(f"cache root not usable: {self.root}: {exc}") from exc
        self._lock = threading.RLock()
        # (category, tool) -> {api_name: [record dict, ...]}
        self._files: dict[tuple[str, str], dict[str, list[dict]]] = {}
        # (category, tool) -> {(api_name, arguments_key): record dict}
        self._index: dict[tuple[str, str], dict[tuple[str, str], dict]] = {}
        self.hits = 0
        self.misses = 0

    # -- file plumbing ---------------------------------------------------

    def _path_for(self, tool: tuple[str, str]) -> Path:
        category, tool_name = tool
        return self.root / quote(category, safe="") / (quote(tool_name, safe="") + ".json")

    def _load(self, tool: tuple[str, str]) -> dict[str, list[dict]]:
        if tool in self._files:
            return self._files[tool]
        path = self._path_for(tool)
        if path.exists():
            try:
                payload = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise CacheIoError(f"unreadable cache file {path}: {exc}") from exc
        else:
            payload = {}
        self._files[tool] = payload
        self._index[tool] = {
            (api_name, record["arguments_key"]): record
            for api_name, records in payload.items()
            for record in records
        }
        return payload

    def _flush(self, tool: tuple[str, str]) -> None:
        path = self._path_for(tool)
        tmp = path.with_suffix(".json.tmp")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp.write_text(
                json.dumps(self._files[tool], ensure_ascii=False, indent=2, sort_keys=True),
                encoding="utf-8",
            )
            os.replace(tmp, path)
        except OSError as exc:
            raise CacheIoError(f"cannot write cache file {path}: {exc}") from exc

    def _tools_on_disk(self) -> list[tuple[str, str]]:
        tools = []
        for path in sorted(self.root.glob("*/*.json")):
            tools.append((unquote(path.parent.name), unquote(path.stem)))
        return tools

    # -- core operations -------------------------------------------------

    def lookup(self, request: CallRequest) -> ApiResponse | None:
        """Stored response for the request's canonical key, if any.

        Repeated lookups of the same key return byte-identical envelopes.
        """
        args_key = canonical_arguments(request.tool_input)
        tool = request.id.as_tool()
        with self._lock:
            self._load(tool)
            record = self._index[tool].get((request.id.api_name, args_key))
            if record is None:
                self.misses += 1
                return None
            self.hits += 1
            return ApiResponse(
                error=record["response"]["error"],
                response=record["response"]["response"],
            )

    def store(
        self, request: CallRequest, response: ApiResponse, source: RecordSource
    ) -> bool:
        """Persist the response iff its classification is cacheable.

        Returns whether a record was written.  Storing an existing key
        keeps the first value so replayed experiments stay stable.
        """
        status = classify(response)
        if not is_cacheable(status):
            return False
        args_key = canonical_arguments(request.tool_input)
        tool = request.id.as_tool()
        with self._lock:
            payload = self._load(tool)
            index = self._index[tool]
            if (request.id.api_name, args_key) in index:
                return False
            record = {
                "arguments_key": args_key,
                "response": {"error": response.error, "response": response.response},
                "status": status.value,
                "source": source.value,
                "stored_at": _now(),
            }
            payload.setdefault(request.id.api_name, []).append(record)
            index[(request.id.api_name, args_key)] = record
            self._flush(tool)
            return True

    def examples_for(
        self, id: ApiIdentifier, limit: int
    ) -> list[tuple[CallRequest, ApiResponse]]:
        """Up to ``limit`` cached records for the API, most recent first."""
        if limit < 0:
            raise ValueError("limit must be >= 0")
        with self._lock:
            payload = self._load(id.as_tool())
            records = payload.get(id.api_name, [])
            picked = list(reversed(records[-limit:])) if limit else []
            return [
                (
                    CallRequest(id=id, tool_input=record["arguments_key"]),
                    ApiResponse(
                        error=record["response"]["error"],
                        response=record["response"]["response"],
                    ),
                )
                for record in picked
            ]

    # -- imports ---------------------------------------------------------

    def import_records(
        self, path: str | Path, source: RecordSource
    ) -> tuple[int, int]:
        """Load a record dump, keep filter survivors, return (kept, dropped).

        The dump is a JSON file holding a list of entries, or a directory
        tree of such files.  Entry shape::

            {"category": ..., "tool_name": ..., "api_name": ...,
             "tool_input": ..., "response": {"error": ..., "response": ...}}

        ``kept`` counts newly persisted records; everything else
        (filtered out or already present) counts as ``dropped``.
        """
        path = Path(path)
        if path.is_dir():
            files = sorted(path.rglob("*.json"))
        elif path.exists():
            files = [path]
        else:
            raise ImportFormatError(f"{path}: no such dump")
        kept = 0
        dropped = 0
        with self._lock:
            touched: set[tuple[str, str]] = set()
            for dump_file in files:
                for entry_no, entry in enumerate(_read_dump(dump_file)):
                    locus = f"{dump_file}[{entry_no}]"
                    request, response = _parse_dump_entry(entry, locus)
                    status = classify(response)
                    if not is_cacheable(status):
                        dropped += 1
                        continue
                    try:
                        args_key = canonical_arguments(request.tool_input)
                    except KeyDerivationError as exc:
                        raise ImportFormatError(f"{locus}: {exc}") from exc
                    tool = request.id.as_tool()
                    payload = self._load(tool)
                    index = self._index[tool]
                    if (request.id.api_name, args_key) in index:
                        dropped += 1
                        continue
                    record = {
                        "arguments_key": args_key,
                        "response": {
                            "error": response.error,
                            "response": response.response,
                        },
                        "status": status.value,
                        "source": source.value,
                        "stored_at": _now(),
                    }
                    payload.setdefault(request.id.api_name, []).append(record)
                    index[(request.id.api_name, args_key)] = record
                    touched.add(tool)
                    kept += 1
            for tool in touched:
                self._flush(tool)
        return kept, dropped

    # -- maintenance and reporting ----------------------------------------

    def iter_records(self) -> Iterator[tuple[str, str, str, dict]]:
        """Yield (category, tool, api_name, record) over the whole store."""
        with self._lock:
            for tool in self._tools_on_disk():
                payload = self._load(tool)
                for api_name in sorted(payload):
                    for record in payload[api_name]:
                        yield tool[0], tool[1], api_name, record

    def records(self) -> Iterator[CacheRecord]:
        """Typed view over the whole store."""
        for category, tool_name, api_name, record in self.iter_records():
            request = CallRequest(
                id=ApiIdentifier(category, tool_name, api_name),
                tool_input=record["arguments_key"],
            )
            yield CacheRecord(
                key=canonical_key(request),
                request=request,
                response=ApiResponse(
                    error=record["response"]["error"],
                    response=record["response"]["response"],
                ),
                status=ApiStatus(record["status"]),
                source=RecordSource(record["source"]),
                stored_at=record["stored_at"],
            )

    def stats(self) -> CacheStats:
        per_source = {source: 0 for source in RecordSource}
        total = 0
        for _, _, _, record in self.iter_records():
            total += 1
            try:
                per_source[RecordSource(record.get("source"))] += 1
            except ValueError:
                pass
        with self._lock:
            return CacheStats(
                per_source_counts=per_source,
                total=total,
                hits=self.hits,
                misses=self.misses,
            )

    def success_tools(self) -> set[tuple[str, str]]:
        """Tools with at least one Success record; the fault-plan universe."""
        tools: set[tuple[str, str]] = set()
        for category, tool_name, _, record in self.iter_records():
            if record.get("status") == ApiStatus.SUCCESS.value:
                tools.add((category, tool_name))
        return tools

    def filter_invalid(self) -> int:
        """Re-apply the cacheability filter to every record; returns removals.

        Useful after rule changes or hand edits; also rewrites every file
        canonically (compaction).
        """
        removed = 0
        with self._lock:
            for tool in self._tools_on_disk():
                payload = self._load(tool)
                for api_name in list(payload):
                    survivors = []
                    for record in payload[api_name]:
                        response = ApiResponse(
                            error=record["response"]["error"],
                            response=record["response"]["response"],
                        )
                        status = classify(response)
                        if is_cacheable(status):
                            record["status"] = status.value
                            survivors.append(record)
                        else:
                            removed += 1
                    if survivors:
                        payload[api_name] = survivors
                    else:
                        del payload[api_name]
                self._index[tool] = {
                    (api_name, record["arguments_key"]): record
                    for api_name, records in payload.items()
                    for record in records
                }
                # rewrite canonically even when nothing was removed (compaction)
                self._flush(tool)
        return removed

    def reset_counters(self) -> None:
        with self._lock:
            self.hits = 0
            self.misses = 0


def _read_dump(dump_file: Path) -> list:
    try:
        payload = json.loads(dump_file.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ImportFormatError(f"{dump_file}: unreadable: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ImportFormatError(
            f"{dump_file}: line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(payload, list):
        raise ImportFormatError(f"{dump_file}: dump must be a JSON list of entries")
    return payload


def _parse_dump_entry(entry: object, locus: str) -> tuple[CallRequest, ApiResponse]:
    if not isinstance(entry, dict):
        raise ImportFormatError(f"{locus}: entry must be an object")
    try:
        request = CallRequest.from_wire(entry)
    except (KeyError, ValueError, TypeError) as exc:
        raise ImportFormatError(f"{locus}: bad request fields: {exc}") from exc
    envelope = entry.get("response")
    if isinstance(envelope, dict):
        try:
            response = parse_wire_response(json.dumps(envelope))
        except ToolgateError as exc:
            raise ImportFormatError(f"{locus}: bad response envelope: {exc}") from exc
    elif isinstance(envelope, str):
        try:
            response = parse_wire_response(envelope)
        except ToolgateError as exc:
            raise ImportFormatError(f"{locus}: bad response envelope: {exc}") from exc
    else:
        raise ImportFormatError(f"{locus}: entry missing response envelope")
    return request, response
