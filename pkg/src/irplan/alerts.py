"""IDS alert observations: Snort fast-alert lines and (classification, priority) pairs.

Two line shapes are accepted. The classic fast.log record::

    01/06-12:00:00.123456  [**] [1:31033:6] MALWARE ... [**] \\
        [Classification: A Network Trojan Detected] [Priority: 1] {TCP} a:p -> b:q

and the compact form, where the classification and priority may sit on their
own lines and the colon after ``Priority`` is optional::

    [1:31033:6]MALWARE Win.Trojan.Cryptodefence
    [Classification:A Network Trojan Detected]
    [Priority 1]
    {TCP}147.32.84.165:1057->222.88.205.195:443
"""

from __future__ import annotations

import re
from collections.abc import Iterable
from dataclasses import dataclass

from irplan.errors import UnrecognizedLine


def _norm(text: str) -> str:
    return " ".join(text.split()).casefold()


@dataclass(frozen=True)
class AlertPair:
    classification: str
    priority: str

    def __post_init__(self):
        c, p = _norm(self.classification), _norm(self.priority)
        if not c or not p:
            raise ValueError("alert pair fields must be non-empty")
        object.__setattr__(self, "classification", c)
        object.__setattr__(self, "priority", p)

    def render(self) -> str:
        return f"[Classification: {self.classification}] [Priority: {self.priority}]"


PAIR_RE = re.compile(
    r"\[\s*classification\s*:?\s*(?P<cls>[^\[\]]*?)\s*\]\s*\[\s*priority\s*:?\s*(?P<prio>[^\[\]]*?)\s*\]",
    re.IGNORECASE,
)


def extract_alert_pairs(text: str) -> frozenset[AlertPair]:
    pairs = set()
    for m in PAIR_RE.finditer(text):
        cls, prio = _norm(m.group("cls")), _norm(m.group("prio"))
        if cls and prio:
            pairs.add(AlertPair(cls, prio))
    return frozenset(pairs)


def render_alert_pairs(pairs: Iterable[AlertPair]) -> str:
    """One pair per line, sorted so equal sets render to equal bytes."""
    ordered = sorted(pairs, key=lambda p: (p.classification, p.priority))
    return "\n".join(p.render() for p in ordered)


PROTOCOLS = ("TCP", "UDP", "ICMP")

_RULE_RE = re.compile(r"\[\s*(\d+:\d+:\d+)\s*\]")
_CLASS_RE = re.compile(r"\[\s*classification\s*:?\s*([^\[\]]*?)\s*\]", re.IGNORECASE)
_PRIO_RE = re.compile(r"\[\s*priority\s*:?\s*([^\[\]]*?)\s*\]", re.IGNORECASE)
_FLOW_RE = re.compile(
    r"\{\s*(?P<proto>[^}]*?)\s*\}\s*(?P<src>[0-9A-Fa-f.:]+?)\s*->\s*(?P<dst>[0-9A-Fa-f.:]+)"
)
_STARS = "[**]"


@dataclass(frozen=True)
class SnortAlert:
    rule_id: str
    message: str
    raw: str
    classification: str | None = None
    priority: int | None = None
    protocol: str | None = None
    src: str | None = None
    dst: str | None = None

    def pair(self) -> AlertPair | None:
        """The (classification, priority) observation atom, if both are present."""
        if not self.classification or self.priority is None:
            return None
        return AlertPair(self.classification, str(self.priority))


def _message_after(line: str, start: int) -> str:
    rest = line[start:]
    cut = len(rest)
    for marker in (_STARS, "[Classification", "[classification", "[Priority", "[priority", "{"):
        i = rest.find(marker)
        if 0 <= i < cut:
            cut = i
    return rest[:cut].strip()


def parse_snort_alert_line(line: str) -> SnortAlert:
    rule = _RULE_RE.search(line)
    cls = _CLASS_RE.search(line)
    if rule is None and cls is None:
        raise UnrecognizedLine(line)
    prio = _PRIO_RE.search(line)
    flow = _FLOW_RE.search(line)

    priority = None
    if prio is not None and prio.group(1).strip().isdigit():
        priority = int(prio.group(1))
    protocol = None
    src = dst = None
    if flow is not None:
        proto = flow.group("proto").upper()
        protocol = proto if proto in PROTOCOLS else "other"
        src, dst = flow.group("src"), flow.group("dst")
    return SnortAlert(
        rule_id=rule.group(1) if rule else "",
        message=_message_after(line, rule.end()) if rule else line[:cls.start()].strip(),
        raw=line,
        classification=cls.group(1).strip() if cls and cls.group(1).strip() else None,
        priority=priority,
        protocol=protocol,
        src=src,
        dst=dst,
    )


_RECORD_START = re.compile(r"^\s*(\d\d/\d\d(/\d\d)?-\d\d:\d\d:\d\d|\[\s*\d+:\d+:\d+\s*\]|\[\*\*\])")


def split_alert_records(text: str) -> list[str]:
    """Group physical lines into alert records.

    A record starts at a timestamp, a ``[gid:sid:rev]`` bracket, or a line
    that opens with text and carries its own classification bracket; other
    non-blank lines are continuations and are joined with a single space.
    """
    records: list[list[str]] = []
    for raw in text.splitlines():
        line = raw.rstrip("\r\n")
        if not line.strip():
            continue
        starts = _RECORD_START.match(line) or (line[:1].isalnum() and _CLASS_RE.search(line))
        if starts or not records:
            records.append([line.rstrip()])
        else:
            records[-1].append(line.strip())
    return [" ".join(parts) for parts in records]


def parse_alert_log(text: str) -> list[SnortAlert]:
    return [parse_snort_alert_line(rec) for rec in split_alert_records(text)]


def observed_pairs(alerts: Iterable[SnortAlert]) -> frozenset[AlertPair]:
    return frozenset(p for p in (a.pair() for a in alerts) if p is not None)
