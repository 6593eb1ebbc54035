"""Six-bit recovery state and its text serialization."""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, fields
from typing import Any, Iterator

from irplan.errors import MalformedValue, MissingField
from irplan.parsing import iter_json_objects, strip_reasoning

FIELD_NAMES: tuple[str, ...] = (
    "is_attack_contained",
    "is_knowledge_sufficient",
    "are_forensics_preserved",
    "is_eradicated",
    "is_hardened",
    "is_recovered",
)

# Effect category that drives each bit, in field order.
STAGE_CATEGORIES: tuple[str, ...] = ("contain", "assess", "preserve", "evict", "harden", "restore")


@dataclass(frozen=True, order=False)
class RecoveryState:
    is_attack_contained: bool = False
    is_knowledge_sufficient: bool = False
    are_forensics_preserved: bool = False
    is_eradicated: bool = False
    is_hardened: bool = False
    is_recovered: bool = False

    @classmethod
    def from_bits(cls, bits) -> RecoveryState:
        """Build from a length-6 sequence of truthy values or a '010101' string."""
        if isinstance(bits, str):
            if len(bits) != 6 or set(bits) - {"0", "1"}:
                raise ValueError(f"bad bit string {bits!r}")
            return cls(*(c == "1" for c in bits))
        values = tuple(bool(b) for b in bits)
        if len(values) != 6:
            raise ValueError("a recovery state has exactly six entries")
        return cls(*values)

    @classmethod
    def initial(cls) -> RecoveryState:
        return cls()

    @classmethod
    def terminal(cls) -> RecoveryState:
        return cls(*([True] * 6))

    def as_tuple(self) -> tuple[bool, ...]:
        # astuple() deep-copies; this sits on the rollout hot path
        return (self.is_attack_contained, self.is_knowledge_sufficient, self.are_forensics_preserved,
                self.is_eradicated, self.is_hardened, self.is_recovered)

    @property
    def bits(self) -> str:
        return "".join("1" if b else "0" for b in self.as_tuple())

    @property
    def progress(self) -> int:
        return sum(self.as_tuple())

    def with_category(self, category: str) -> RecoveryState:
        values = list(self.as_tuple())
        values[STAGE_CATEGORIES.index(category)] = True
        return RecoveryState(*values)

    def has(self, category: str) -> bool:
        return self.as_tuple()[STAGE_CATEGORIES.index(category)]

    def covers(self, other: RecoveryState) -> bool:
        """True when every bit set in ``other`` is also set here."""
        return all(a or not b for a, b in zip(self.as_tuple(), other.as_tuple()))

    def to_dict(self) -> dict[str, bool]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def __iter__(self) -> Iterator[bool]:
        return iter(self.as_tuple())


def is_terminal(state: RecoveryState) -> bool:
    return all(state.as_tuple())


def merge_monotone(state: RecoveryState, next_state: RecoveryState) -> RecoveryState:
    return RecoveryState(*(a or b for a, b in zip(state.as_tuple(), next_state.as_tuple())))


def all_states() -> list[RecoveryState]:
    return [RecoveryState(*bits) for bits in itertools.product((False, True), repeat=6)]


def render_state_text(state: RecoveryState) -> str:
    return json.dumps(state.to_dict())


def _coerce_bool(name: str, value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().casefold() in ("true", "false"):
        return value.strip().casefold() == "true"
    raise MalformedValue(name, value)


_KV_RE = re.compile(
    r"[\"'`]*(?P<name>" + "|".join(FIELD_NAMES) + r")[\"'`]*\s*[:=]\s*[\"'`]*(?P<value>[A-Za-z0-9_+-]+)",
)


def _from_mapping(obj: dict[str, Any]) -> RecoveryState:
    values = []
    for name in FIELD_NAMES:
        if name not in obj:
            raise MissingField(name)
        values.append(_coerce_bool(name, obj[name]))
    return RecoveryState(*values)


def parse_state_text(text: str) -> RecoveryState:
    """Parse the six recovery flags out of a generation or a label.

    The first JSON object that mentions any of the six names wins. Texts that
    use the loose ``"name" : true;`` listing are handled by a key/value scan.
    """
    body = strip_reasoning(text) or text
    for obj in iter_json_objects(body):
        if any(name in obj for name in FIELD_NAMES):
            return _from_mapping(obj)
    found: dict[str, str] = {}
    for m in _KV_RE.finditer(body):
        found.setdefault(m.group("name"), m.group("value"))
    if not found:
        raise MissingField(FIELD_NAMES[0])
    return _from_mapping(found)
