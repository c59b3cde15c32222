"""Uniform chat-completion interface for the simulator, call writer and judges.

Three providers are shipped: an OpenAI-compatible HTTP bridge, a
deterministic stub for tests and dry runs, and a record/replay wrapper
that persists exchanges keyed by a digest of the prompt so LLM-touching
runs can be made deterministic and free.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from .model import ToolgateError


class BridgeUnavailable(ToolgateError):
    """Provider could not produce a completion within the retry budget."""


class BridgeAuthError(ToolgateError):
    """Provider rejected the credentials; never retried."""


@dataclass(frozen=True)
class ChatExchange:
    """One provider attempt, completion recorded verbatim and untrimmed."""

    system: str
    user: str
    model_name: str
    temperature: float
    completion: str = ""
    usage: dict | None = None
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "system": self.system,
            "user": self.user,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "completion": self.completion,
            "usage": self.usage,
            "error": self.error,
        }


class AuditLog:
    """Append-ordered exchange log; newline-delimited JSON when file-backed."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[ChatExchange] = []
        self._lock = threading.Lock()

    def append(self, exchange: ChatExchange) -> None:
        with self._lock:
            if self.path is None:
                self.entries.append(exchange)
            else:
                with self.path.open("a", encoding="utf-8") as handle:
                    handle.write(json.dumps(exchange.to_json(), ensure_ascii=False))
                    handle.write("\n")

    def __len__(self) -> int:
        if self.path is None:
            return len(self.entries)
        if not self.path.exists():
            return 0
        with self.path.open("r", encoding="utf-8") as handle:
            return sum(1 for _ in handle)


class LlmBridge(Protocol):
    def complete(
        self, system: str, user: str, *, model_name: str, temperature: float
    ) -> str: ...


@dataclass(frozen=True)
class ChatModel:
    """A bridge pinned to one model name and temperature."""

    bridge: LlmBridge
    model_name: str
    temperature: float = 0.0

    def complete(self, system: str, user: str) -> str:
        return self.bridge.complete(
            system, user, model_name=self.model_name, temperature=self.temperature
        )


class HttpChatBridge:
    """OpenAI-compatible chat completions client.

    Transient transport failures (connection errors, timeouts, 429, 5xx)
    are retried with exponential backoff up to ``retry_budget`` extra
    attempts; credential rejections raise immediately.  A per-provider
    semaphore enforces the in-flight limit.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        *,
        timeout_s: float = 60.0,
        retry_budget: int = 3,
        backoff_s: float = 0.5,
        max_in_flight: int = 4,
        audit: AuditLog | None = None,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not endpoint:
            raise BridgeUnavailable("no provider endpoint configured")
        self._endpoint = endpoint
        self._api_key = api_key
        self._retry_budget = retry_budget
        self._backoff_s = backoff_s
        self._audit = audit
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._client = client or httpx.Client(timeout=timeout_s)
        self._sleep = sleep

    def _log(self, exchange: ChatExchange) -> None:
        if self._audit is not None:
            self._audit.append(exchange)

    def complete(
        self, system: str, user: str, *, model_name: str, temperature: float
    ) -> str:
        payload = {
            "model": model_name,
            "temperature": temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        headers = {}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        last_error = "no attempt made"
        for attempt in range(self._retry_budget + 1):
            try:
                with self._sem:
                    resp = self._client.post(
                        self._endpoint, json=payload, headers=headers
                    )
            except httpx.HTTPError as exc:
                last_error = f"transport failure: {exc}"
                self._log(
                    ChatExchange(system, user, model_name, temperature, error=last_error)
                )
                self._sleep(self._backoff_s * (2**attempt))
                continue
            if resp.status_code in (401, 403):
                self._log(
                    ChatExchange(
                        system,
                        user,
                        model_name,
                        temperature,
                        error=f"auth rejected: {resp.status_code}",
                    )
                )
                raise BridgeAuthError(
                    f"provider rejected credentials with status {resp.status_code}"
                )
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"provider status {resp.status_code}"
                self._log(
                    ChatExchange(system, user, model_name, temperature, error=last_error)
                )
                self._sleep(self._backoff_s * (2**attempt))
                continue
            if resp.status_code != 200:
                self._log(
                    ChatExchange(
                        system,
                        user,
                        model_name,
                        temperature,
                        error=f"provider status {resp.status_code}",
                    )
                )
                raise BridgeUnavailable(
                    f"provider returned status {resp.status_code}: {resp.text[:200]}"
                )
            try:
                body = resp.json()
                completion = body["choices"][0]["message"]["content"]
                usage = body.get("usage")
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                self._log(
                    ChatExchange(
                        system,
                        user,
                        model_name,
                        temperature,
                        error=f"malformed provider payload: {exc}",
                    )
                )
                raise BridgeUnavailable(
                    f"provider payload not understood: {exc}"
                ) from exc
            self._log(
                ChatExchange(
                    system, user, model_name, temperature,
                    completion=completion, usage=usage,
                )
            )
            return completion
        raise BridgeUnavailable(
            f"retry budget exhausted after {self._retry_budget + 1} attempts: {last_error}"
        )


class StubBridge:
    """Deterministic scripted provider.

    ``script`` is either a sequence of completions consumed in order or a
    callable ``(system, user, model_name, temperature) -> str``.  A drained
    sequence raises BridgeUnavailable so over-consumption fails loudly.
    """

    def __init__(
        self,
        script: Sequence[str] | Callable[[str, str, str, float], str],
        audit: AuditLog | None = None,
    ):
        self._script = script
        self._audit = audit
        self._cursor = 0
        self._lock = threading.Lock()

    def complete(
        self, system: str, user: str, *, model_name: str, temperature: float
    ) -> str:
        if callable(self._script):
            completion = self._script(system, user, model_name, temperature)
        else:
            with self._lock:
                if self._cursor >= len(self._script):
                    raise BridgeUnavailable("stub script exhausted")
                completion = self._script[self._cursor]
                self._cursor += 1
        if self._audit is not None:
            self._audit.append(
                ChatExchange(system, user, model_name, temperature, completion=completion)
            )
        return completion


class RecordReplayBridge:
    """Replays persisted completions for previously seen prompts.

    Exchanges are stored one JSON file per digest of
    (system, user, model_name, temperature).  On a miss the inner bridge
    is consulted and the exchange persisted; with no inner bridge a miss
    raises BridgeUnavailable.
    """

    def __init__(self, root: str | Path, inner: LlmBridge | None = None):
        self._root = Path(root)
        self._inner = inner
        self._lock = threading.Lock()

    @staticmethod
    def digest(system: str, user: str, model_name: str, temperature: float) -> str:
        blob = json.dumps(
            [system, user, model_name, temperature], ensure_ascii=False
        ).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def _path_for(self, digest: str) -> Path:
        return self._root / digest[:2] / f"{digest}.json"

    def complete(
        self, system: str, user: str, *, model_name: str, temperature: float
    ) -> str:
        digest = self.digest(system, user, model_name, temperature)
        path = self._path_for(digest)
        if path.exists():
            payload = json.loads(path.read_text(encoding="utf-8"))
            return payload["completion"]
        if self._inner is None:
            raise BridgeUnavailable(
                f"no recorded exchange for digest {digest[:12]} and no inner bridge"
            )
        completion = self._inner.complete(
            system, user, model_name=model_name, temperature=temperature
        )
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(
                json.dumps(
                    {
                        "system": system,
                        "user": user,
                        "model_name": model_name,
                        "temperature": temperature,
                        "completion": completion,
                    },
                    ensure_ascii=False,
                    indent=2,
                ),
                encoding="utf-8",
            )
        return completion


_FENCE_RE = re.compile(r"```(?:[A-Za-z0-9_-]+)?\s*(.*?)```", re.DOTALL)


def extract_json_candidate(text: str) -> str:
    """Best-effort slice of the JSON object inside an LLM completion.

    Strips code-fence wrappers and surrounding prose; models frequently
    fence JSON even when told not to.
    """
    fenced = _FENCE_RE.search(text)
    if fenced:
        text = fenced.group(1)
    start = text.find("{")
    end = text.rfind("}")
    if start != -1 and end > start:
        return text[start : end + 1]
    return text.strip()
