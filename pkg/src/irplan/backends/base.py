"""Generation requests, the backend protocol and structured-output parsing."""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

from irplan.domain import ResponseAction
from irplan.errors import MalformedObject
from irplan.parsing import first_json_object, get_string, strip_reasoning
from irplan.prompts import ALERT_GEN, PromptContext

DEFAULT_TEMPERATURE = 0.6
DEFAULT_MAX_TOKENS = 1024
ALERT_MAX_TOKENS = 512


@dataclass(frozen=True)
class GenerationRequest:
    """One sampling call.

    ``prompt``, ``temperature``, ``max_tokens``, ``stop_sequences`` and ``seed``
    go over the wire. ``template``, ``context``, ``role`` and ``sample_index``
    are local metadata that offline backends use instead of re-parsing prompts.
    """

    prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    stop_sequences: tuple[str, ...] = ()
    seed: int | None = None
    template: str | None = field(default=None, compare=False)
    context: PromptContext | None = field(default=None, compare=False, repr=False)
    role: str | None = field(default=None, compare=False)
    sample_index: int = field(default=0, compare=False)

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


def default_max_tokens(template: str | None) -> int:
    return ALERT_MAX_TOKENS if template == ALERT_GEN else DEFAULT_MAX_TOKENS


def fingerprint(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@runtime_checkable
class Backend(Protocol):
    def generate(self, request: GenerationRequest) -> str: ...


def generate(backend: Backend, request: GenerationRequest) -> str:
    return backend.generate(request)


class CountingBackend:
    """Thread-safe wrapper recording how often, and with which prompts, a backend is hit."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self._lock = threading.Lock()
        self.calls = 0
        self.fingerprints: list[str] = []
        self.by_role: dict[str, int] = {}

    def generate(self, request: GenerationRequest) -> str:
        with self._lock:
            self.calls += 1
            self.fingerprints.append(fingerprint(request.prompt))
            role = request.role or "unspecified"
            self.by_role[role] = self.by_role.get(role, 0) + 1
        return self.inner.generate(request)

    def snapshot(self) -> tuple[int, list[str]]:
        with self._lock:
            return self.calls, list(self.fingerprints)


def parse_action_object(text: str) -> ResponseAction:
    """First JSON object carrying ``Action`` and ``Explanation`` strings."""
    body = strip_reasoning(text) or text
    obj = first_json_object(body)
    action = get_string(obj, "Action").strip()
    explanation = get_string(obj, "Explanation").strip()
    if not action:
        raise MalformedObject("empty Action")
    return ResponseAction(action, explanation)


# Request roles, used by offline backends and call accounting.
ROLE_PROPOSE = "propose"
ROLE_ROLLOUT = "rollout"
ROLE_SIMULATE = "simulate"
ROLE_SCREEN = "screen"
ROLE_CALIBRATE = "calibrate"
ROLE_JUDGE = "judge"
