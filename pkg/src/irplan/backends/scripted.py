"""Lookup-table backend keyed by the hash of the exact prompt bytes."""

from __future__ import annotations

import json
import threading
from pathlib import Path

from irplan.backends.base import GenerationRequest, fingerprint
from irplan.errors import UnscriptedPrompt


class ScriptedBackend:
    """Returns stored responses for known prompts.

    A value may be a list, in which case ``request.sample_index`` picks the
    entry (modulo its length) so that N samples of one prompt can differ.
    """

    def __init__(self, responses: dict[str, str | list[str]]):
        self.responses = dict(responses)

    @classmethod
    def from_prompts(cls, mapping: dict[str, str | list[str]]) -> ScriptedBackend:
        return cls({fingerprint(p): r for p, r in mapping.items()})

    @classmethod
    def load(cls, path: str | Path) -> ScriptedBackend:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "prompts" in data:
            return cls.from_prompts({item["prompt"]: item["response"] for item in data["prompts"]})
        return cls(data["responses"])

    def generate(self, request: GenerationRequest) -> str:
        key = fingerprint(request.prompt)
        try:
            value = self.responses[key]
        except KeyError:
            raise UnscriptedPrompt(key) from None
        if isinstance(value, list):
            return value[request.sample_index % len(value)]
        return value


class RecordingBackend:
    """Wraps a backend and captures its answers in the layout ScriptedBackend loads.

    Answers are stored per prompt and sample index; the first answer seen for
    a slot wins.
    """

    def __init__(self, inner):
        self.inner = inner
        self._lock = threading.Lock()
        self._slots: dict[str, dict[int, str]] = {}

    def generate(self, request: GenerationRequest) -> str:
        text = self.inner.generate(request)
        with self._lock:
            self._slots.setdefault(fingerprint(request.prompt), {}).setdefault(request.sample_index, text)
        return text

    def script(self) -> dict[str, str | list[str]]:
        out: dict[str, str | list[str]] = {}
        for key, slots in sorted(self._slots.items()):
            if set(slots) == {0}:
                out[key] = slots[0]
                continue
            # Unseen indices are filled with the nearest earlier answer.
            values, last = [], slots[min(slots)]
            for i in range(max(slots) + 1):
                last = slots.get(i, last)
                values.append(last)
            out[key] = values
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({"responses": self.script()}, indent=1, sort_keys=True) + "\n",
                              encoding="utf-8")
