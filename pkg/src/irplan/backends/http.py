"""Chat-completions HTTP client with record/replay cassettes."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections import defaultdict, deque
from pathlib import Path
from typing import Callable

import httpx

from irplan.backends.base import GenerationRequest
from irplan.errors import CassetteMiss, ConfigError, Timeout, Transport

log = logging.getLogger(__name__)

BACKOFF_SECONDS = (1.0, 2.0, 4.0)


def request_body(model: str, request: GenerationRequest) -> bytes:
    """Canonical request bytes; cassettes match on these."""
    body: dict = {
        "model": model,
        "messages": [{"role": "user", "content": request.prompt}],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    if request.stop_sequences:
        body["stop"] = list(request.stop_sequences)
    if request.seed is not None:
        body["seed"] = request.seed
    return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def message_content(payload: bytes) -> str:
    try:
        data = json.loads(payload)
        content = data["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise Transport(200, f"unexpected response envelope: {exc}") from None
    if not isinstance(content, str):
        raise Transport(200, "message content is not a string")
    return content


class Cassette:
    """Recorded request/response pairs, stored as JSON.

    Only request and response bodies are kept; headers (and so credentials)
    never reach the file. Replay matches on exact request bytes, consuming
    duplicate requests in recorded order.
    """

    def __init__(self, path: str | Path, interactions: list[dict] | None = None):
        self.path = Path(path)
        self.interactions: list[dict] = list(interactions or [])
        self._lock = threading.Lock()
        self._queues: dict[str, deque] | None = None

    @classmethod
    def load(cls, path: str | Path) -> Cassette:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"cassette not found: {p}")
        data = json.loads(p.read_text(encoding="utf-8"))
        return cls(p, data["interactions"])

    def record(self, request: bytes, status: int, response: bytes) -> None:
        with self._lock:
            self.interactions.append({
                "request": request.decode("utf-8"),
                "status": status,
                "response": response.decode("utf-8"),
            })

    def save(self) -> None:
        with self._lock:
            # Sorted so concurrent recording still yields a stable file.
            ordered = sorted(self.interactions, key=lambda i: (i["request"], i["response"]))
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps({"interactions": ordered}, indent=1, ensure_ascii=False) + "\n",
                             encoding="utf-8")

    def lookup(self, request: bytes) -> tuple[int, bytes]:
        with self._lock:
            if self._queues is None:
                self._queues = defaultdict(deque)
                for item in self.interactions:
                    self._queues[item["request"]].append(item)
            key = request.decode("utf-8")
            queue = self._queues.get(key)
            if not queue:
                raise CassetteMiss(f"request not in cassette {self.path}")
            item = queue.popleft() if len(queue) > 1 else queue[0]
        return item["status"], item["response"].encode("utf-8")


class _RecordingTransport(httpx.BaseTransport):
    def __init__(self, inner: httpx.BaseTransport, cassette: Cassette):
        self.inner = inner
        self.cassette = cassette

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        response = self.inner.handle_request(request)
        content = response.read()
        self.cassette.record(request.content, response.status_code, content)
        return httpx.Response(response.status_code, headers=response.headers, content=content)

    def close(self) -> None:
        self.inner.close()


def replay_transport(cassette: Cassette) -> httpx.MockTransport:
    def handler(request: httpx.Request) -> httpx.Response:
        status, body = cassette.lookup(request.content)
        return httpx.Response(status, content=body, headers={"content-type": "application/json"})

    return httpx.MockTransport(handler)


class ChatCompletionsBackend:
    """Sends each prompt as a single user message to ``{base_url}/chat/completions``.

    Transport-level failures (connection errors, timeouts) are retried with
    1s/2s/4s backoff; HTTP error statuses are raised immediately.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        auth_env: str | None = None,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
        cassette: Cassette | None = None,
        cassette_mode: str = "off",
        sleep: Callable[[float], None] = time.sleep,
        backoff: tuple[float, ...] = BACKOFF_SECONDS,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.auth_env = auth_env
        self.sleep = sleep
        self.backoff = backoff
        self.cassette = cassette
        if cassette_mode == "replay":
            if cassette is None:
                raise ConfigError("replay mode requires a cassette")
            transport = replay_transport(cassette)
        elif cassette_mode == "record":
            if cassette is None:
                raise ConfigError("record mode requires a cassette path")
            transport = _RecordingTransport(transport or httpx.HTTPTransport(), cassette)
        elif cassette_mode != "off":
            raise ConfigError(f"unknown cassette mode {cassette_mode!r}")
        self._recording = cassette_mode == "record"
        self.client = httpx.Client(transport=transport, timeout=timeout)

    def _headers(self) -> dict[str, str]:
        headers = {"content-type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if token:
                headers["authorization"] = f"Bearer {token}"
        return headers

    def generate(self, request: GenerationRequest) -> str:
        body = request_body(self.model, request)
        url = f"{self.base_url}/chat/completions"
        last: Exception | None = None
        for attempt in range(len(self.backoff) + 1):
            if attempt:
                delay = self.backoff[attempt - 1]
                log.warning("retrying chat completion in %.0fs (attempt %d): %s", delay, attempt + 1,
                            type(last).__name__)
                self.sleep(delay)
            try:
                response = self.client.post(url, content=body, headers=self._headers())
            except httpx.TransportError as exc:
                last = exc
                continue
            if response.status_code >= 400:
                raise Transport(response.status_code, response.text)
            return message_content(response.content)
        if isinstance(last, httpx.TimeoutException):
            raise Timeout(f"chat completion timed out after {len(self.backoff) + 1} attempts")
        raise Transport(None, f"{type(last).__name__}: {last}")

    def close(self) -> None:
        self.client.close()
        if self._recording:
            self.cassette.save()
