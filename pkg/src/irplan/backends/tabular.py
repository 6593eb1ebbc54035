"""Seeded table-driven world model, plus oracle and no-op builders for scenarios."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from irplan.alerts import AlertPair, parse_snort_alert_line, render_alert_pairs
from irplan.backends.base import ROLE_ROLLOUT, GenerationRequest, fingerprint
from irplan.domain import CATEGORIES, ResponseAction
from irplan.prompts import ACTION_GEN, ALERT_GEN, CALIBRATION, STATE_GEN
from irplan.rng import derive_seed, substream
from irplan.scenario import (DEFAULT_KEYWORDS, ScenarioSpec, apply_rule, classify_text)
from irplan.state import STAGE_CATEGORIES, RecoveryState, all_states, render_state_text

ANY = "*"


@dataclass(frozen=True)
class Outcome:
    probability: float
    next_state: RecoveryState
    alerts: frozenset[AlertPair] | None = None


def _reasoning(note: str) -> str:
    return f"{note}\n</think>\n"


class TabularBackend:
    """World model driven by explicit tables instead of a language model.

    ``transitions`` maps ``(state bits, category)`` to a distribution over
    outcomes; missing entries self-loop. ``proposals`` maps state bits (or
    ``"*"``) to candidate actions, and ``rollout_policy`` optionally fixes the
    action sampled inside rollouts. ``alerts`` maps tactic label, then progress
    count (or ``"*"``), to alert pairs.

    The outcome draw for a transition is seeded only by ``request.seed``, so
    the state and alert generations of one transition agree.
    """

    def __init__(
        self,
        transitions: dict[tuple[str, str], list[Outcome]] | None = None,
        proposals: dict[str, list[ResponseAction]] | None = None,
        rollout_policy: dict[str, ResponseAction] | None = None,
        alerts: dict[str, dict[str, frozenset[AlertPair]]] | None = None,
        calibration: dict[str, str] | None = None,
        keyword_matchers: dict[str, Any] | None = None,
        seed: int = 0,
    ):
        self.transitions = dict(transitions or {})
        self.proposals = dict(proposals or {})
        self.rollout_policy = dict(rollout_policy or {})
        self.alerts = dict(alerts or {})
        self.calibration = dict(calibration or {})
        self.keyword_matchers = keyword_matchers or DEFAULT_KEYWORDS
        self.seed = seed
        for key, dist in self.transitions.items():
            total = math.fsum(o.probability for o in dist)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"distribution for {key} sums to {total}, not 1")
            if any(o.probability < 0 for o in dist):
                raise ValueError(f"negative probability in distribution for {key}")

    def _rng(self, kind: str, request: GenerationRequest):
        salt = request.seed if request.seed is not None else fingerprint(request.prompt)
        return substream(self.seed, kind, salt, request.sample_index if kind == "action" else 0)

    def category_of(self, action: ResponseAction) -> str:
        return action.category or classify_text(action.action, self.keyword_matchers)

    def outcome(self, state: RecoveryState, action: ResponseAction, request: GenerationRequest) -> Outcome:
        dist = self.transitions.get((state.bits, self.category_of(action)))
        if not dist:
            return Outcome(1.0, state)
        u = self._rng("outcome", request).random()
        acc = 0.0
        for o in dist:
            acc += o.probability
            if u < acc:
                return o
        return dist[-1]

    def alerts_for(self, tactic: str, progress: int) -> frozenset[AlertPair]:
        row = self.alerts.get(tactic, {})
        return row.get(str(progress), row.get(ANY, frozenset()))

    def generate(self, request: GenerationRequest) -> str:
        ctx = request.context
        if ctx is None or request.template is None:
            raise ValueError("tabular backend needs request.template and request.context")
        if request.template == STATE_GEN:
            action = ctx.previous_actions[-1]
            out = self.outcome(ctx.previous_state, action, request)
            return _reasoning("Tabular transition.") + render_state_text(out.next_state)
        if request.template == ALERT_GEN:
            tactic = str(ctx.target_tactic)
            state = ctx.previous_state or RecoveryState.initial()
            if ctx.previous_actions:
                out = self.outcome(state, ctx.previous_actions[-1], request)
                pairs = out.alerts if out.alerts is not None else self.alerts_for(tactic, out.next_state.progress)
            else:
                pairs = self.alerts_for(tactic, state.progress)
            return _reasoning("Tabular alerts.") + render_alert_pairs(pairs)
        if request.template == ACTION_GEN:
            bits = ctx.previous_state.bits
            if request.role == ROLE_ROLLOUT and bits in self.rollout_policy:
                return _reasoning("Rollout policy.") + self.rollout_policy[bits].render()
            options = self.proposals.get(bits) or self.proposals.get(ANY)
            if not options:
                raise ValueError(f"no proposals for state {bits}")
            if request.role == ROLE_ROLLOUT:
                choice = self._rng("action", request).choice(options)
            else:
                choice = options[request.sample_index % len(options)]
            return _reasoning("Tabular proposal.") + choice.render()
        if request.template == CALIBRATION:
            incumbent = str(ctx.tactics[0]) if ctx.tactics else ""
            return _reasoning("Tabular calibration.") + self.calibration.get(incumbent, incumbent)
        raise ValueError(f"unsupported template {request.template!r}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TabularBackend:
        """Build from a JSON-compatible description (see README for the layout)."""
        transitions = {}
        for item in data.get("transitions", []):
            transitions[(item["state"], item["category"])] = [
                Outcome(o["p"], RecoveryState.from_bits(o["next"]),
                        None if "alerts" not in o else
                        frozenset(AlertPair(c, str(p)) for c, p in o["alerts"]))
                for o in item["outcomes"]
            ]
        proposals = {k: [ResponseAction.from_dict(a) for a in v] for k, v in data.get("proposals", {}).items()}
        rollout = {k: ResponseAction.from_dict(v) for k, v in data.get("rollout_policy", {}).items()}
        alerts = {
            t: {k: frozenset(AlertPair(c, str(p)) for c, p in v) for k, v in rows.items()}
            for t, rows in data.get("alerts", {}).items()
        }
        return cls(transitions, proposals, rollout, alerts, data.get("calibration"),
                   data.get("keyword_matchers"), int(data.get("seed", 0)))

    @classmethod
    def load(cls, path: str | Path) -> TabularBackend:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def action_for(spec: ScenarioSpec, category: str) -> ResponseAction:
    """An action whose text the scenario's keyword matchers ground to ``category``."""
    options = [a for a in spec.reference_actions if a.category == category]
    if category == "noop":
        options.append(ResponseAction("Continue monitoring the affected hosts",
                                      "Keeps watch without changing anything.", "noop"))
    else:
        options.append(ResponseAction(f"Carry out the {category} stage of the response plan",
                                      f"Completes the {category} stage.", category))
    for a in options:
        if classify_text(a.action, spec.keyword_matchers) == category:
            return a
    raise ValueError(f"scenario {spec.name}: no action text grounds to category {category!r}")


def optimal_values(spec: ScenarioSpec) -> tuple[dict[str, float], dict[str, str]]:
    """Expected unit-cost-to-go and best category for every state under the scenario dynamics."""
    unit = spec.cost_model.unit_cost
    values: dict[str, float] = {}
    best: dict[str, str] = {}
    for s in sorted(all_states(), key=lambda st: -st.progress):
        if s.progress == 6:
            values[s.bits] = 0.0
            continue
        v_best, c_best = math.inf, "noop"
        for cat in STAGE_CATEGORIES:
            nxt = apply_rule(spec, s, cat)
            p = spec.stage_rules[cat].success_probability
            if nxt is None or nxt == s or p <= 0:
                continue
            v = unit / p + values[nxt.bits]
            if v < v_best - 1e-12:
                v_best, c_best = v, cat
        values[s.bits] = v_best
        best[s.bits] = c_best
    return values, best


def oracle_backend(spec: ScenarioSpec, seed: int = 0, width: int = 3) -> TabularBackend:
    """Exact world model of ``spec`` whose rollouts follow the optimal policy.

    Each state proposes its optimal action together with up to ``width - 1``
    other stage actions, in a seeded order, so the planner still has to pick.
    """
    _, best = optimal_values(spec)
    transitions = {}
    proposals = {}
    rollout = {}
    alerts = {
        t: {k: frozenset(filter(None, (_pair_of(line) for line in rows[k]))) for k in rows}
        for t, rows in spec.alert_table.items()
    }
    for s in all_states():
        for cat in STAGE_CATEGORIES:
            nxt = apply_rule(spec, s, cat)
            if nxt is None or nxt == s:
                continue
            p = spec.stage_rules[cat].success_probability
            dist = [Outcome(p, nxt)] if p >= 1.0 else [Outcome(p, nxt), Outcome(1.0 - p, s)]
            transitions[(s.bits, cat)] = [o for o in dist if o.probability > 0] or [Outcome(1.0, s)]
        if s.progress == 6:
            continue
        rng = substream(seed, "oracle-proposals", s.bits)
        others = [c for c in CATEGORIES if c != best[s.bits]]
        rng.shuffle(others)
        cats = [best[s.bits]] + others[: max(0, width - 1)]
        rng.shuffle(cats)
        proposals[s.bits] = [action_for(spec, c) for c in cats]
        rollout[s.bits] = action_for(spec, best[s.bits])
    return TabularBackend(transitions, proposals, rollout, alerts, keyword_matchers=spec.keyword_matchers,
                          seed=derive_seed(seed, "oracle"))


def _pair_of(line: str) -> AlertPair | None:
    return parse_snort_alert_line(line).pair()


def noop_backend() -> TabularBackend:
    """A world model that never proposes anything effective."""
    idle = ResponseAction("Continue monitoring the affected hosts", "Waits for more evidence.", "noop")
    return TabularBackend(proposals={ANY: [idle]})
