"""Actions, tactics, history and cost vocabulary."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from irplan.alerts import AlertPair, SnortAlert
from irplan.state import STAGE_CATEGORIES

CATEGORIES: tuple[str, ...] = STAGE_CATEGORIES + ("noop",)


@dataclass(frozen=True)
class ResponseAction:
    action: str
    explanation: str = ""
    category: str | None = None

    def __post_init__(self):
        if not self.action or not self.action.strip():
            raise ValueError("action text must be non-empty")
        if self.category is not None and self.category not in CATEGORIES:
            raise ValueError(f"unknown action category {self.category!r}")

    def render(self) -> str:
        """Canonical JSON object with the Action/Explanation properties."""
        return json.dumps({"Action": self.action, "Explanation": self.explanation})

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"action": self.action, "explanation": self.explanation}
        if self.category is not None:
            d["category"] = self.category
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ResponseAction:
        return cls(d["action"], d.get("explanation", ""), d.get("category"))


@dataclass(frozen=True)
class Tactic:
    label: str

    def __str__(self) -> str:
        return self.label

    def matches(self, text: str) -> bool:
        return self.label.casefold() == text.strip().casefold()


@dataclass(frozen=True)
class CostModel:
    unit_cost: float = 1.0
    penalty_cost: float = 1.0
    failure_cost: float = 20.0

    def __post_init__(self):
        if min(self.unit_cost, self.penalty_cost, self.failure_cost) < 0:
            raise ValueError("costs must be nonnegative")
        if self.failure_cost < self.unit_cost:
            raise ValueError("failure_cost must be at least unit_cost")

    def cost(self, state=None, action=None) -> float:
        """c(s, a); uniform in the evaluation scheme."""
        return self.unit_cost


@dataclass(frozen=True)
class HistoryEntry:
    index: int
    observation: tuple[SnortAlert | AlertPair, ...]
    action: ResponseAction | None = None


@dataclass
class HistoryLog:
    """Append-only record of observations and executed actions for one episode."""

    current_tactic: Tactic
    entries: list[HistoryEntry] = field(default_factory=list)

    def append(self, observation, action: ResponseAction | None = None) -> HistoryEntry:
        entry = HistoryEntry(len(self.entries), tuple(observation or ()), action)
        self.entries.append(entry)
        return entry

    @property
    def actions(self) -> list[ResponseAction]:
        return [e.action for e in self.entries if e.action is not None]

    def log_text(self) -> str:
        lines = []
        for e in self.entries:
            for o in e.observation:
                lines.append(o.raw if isinstance(o, SnortAlert) else o.render())
        return "\n".join(lines)
