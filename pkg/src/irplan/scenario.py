"""Scripted ground-truth environments that stand in for the true attack dynamics.

A scenario gates each recovery bit behind prerequisite stages and a Bernoulli
success draw. Alerts are rendered from per-tactic templates indexed by the
number of completed stages, plus an occasional false alarm drawn from the
``Normal Activity`` pool.
"""

from __future__ import annotations

import functools
import json
import re
import string
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from irplan.alerts import SnortAlert, parse_snort_alert_line
from irplan.domain import CATEGORIES, CostModel, ResponseAction, Tactic
from irplan.errors import EpisodeFinished, SchemaError, TemplateError, UnrecognizedLine
from irplan.rng import substream
from irplan.state import STAGE_CATEGORIES, RecoveryState, is_terminal

NORMAL_ACTIVITY = "Normal Activity"
ANY_PROGRESS = "*"

DEFAULT_KEYWORDS: dict[str, list[str]] = {
    "contain": [r"\bdisconnect", r"\bisolat", r"\bblock", r"\bsegment", r"\bquarantin", r"\bsever",
                r"\bcontain"],
    "assess": [r"\banaly[sz]", r"\binvestigat", r"\bscan", r"\bidentify", r"\bassess", r"\bscope",
               r"\btriage", r"\bhunt", r"\baudit", r"\binventory"],
    "preserve": [r"\bforensic", r"\bimage", r"\bsnapshot", r"\bpreserv", r"\bevidence", r"\bacquire"],
    "evict": [r"\bwipe", r"\beradicat", r"\bremov", r"\bterminat", r"\bkill", r"\bdelete",
              r"\breimag", r"\brevok", r"\bevict"],
    "harden": [r"\bupgrad", r"\bpatch", r"\bharden", r"\bupdat", r"\bmulti-factor", r"\bmfa\b",
               r"\brotate"],
    "restore": [r"\brestor", r"\breconnect", r"\brecover", r"\bresum", r"\bbring .* back"],
    "noop": [],
}

DEFAULT_REQUIREMENTS: dict[str, tuple[str, ...]] = {
    cat: STAGE_CATEGORIES[:i] for i, cat in enumerate(STAGE_CATEGORIES)
}


@dataclass(frozen=True)
class StageRule:
    required_prior_stages: frozenset[str] = frozenset()
    success_probability: float = 1.0
    # Composite effect: extra stages completed together with this one.
    also_sets: tuple[str, ...] = ()


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    tactic: Tactic
    technique_labels: tuple[str, ...]
    system_description: str
    incident_description: str
    stage_rules: dict[str, StageRule]
    alert_table: dict[str, dict[str, tuple[str, ...]]]
    false_alarm_rate: float
    keyword_matchers: dict[str, tuple[str, ...]]
    cost_model: CostModel = field(default_factory=CostModel)
    candidate_tactics: tuple[Tactic, ...] = ()
    reference_actions: tuple[ResponseAction, ...] = ()
    variables: dict[str, str] = field(default_factory=dict)

    def alert_templates(self, tactic: Tactic | str, progress: int) -> tuple[str, ...]:
        row = self.alert_table.get(str(tactic), {})
        return row.get(str(progress), row.get(ANY_PROGRESS, ()))

    @property
    def normal_templates(self) -> tuple[str, ...]:
        return self.alert_templates(NORMAL_ACTIVITY, 0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "tactic": self.tactic.label,
            "techniques": list(self.technique_labels),
            "system_description": self.system_description,
            "incident_description": self.incident_description,
            "stage_rules": {
                cat: {
                    "required_prior_stages": sorted(rule.required_prior_stages,
                                                    key=STAGE_CATEGORIES.index),
                    "success_probability": rule.success_probability,
                    **({"also_sets": list(rule.also_sets)} if rule.also_sets else {}),
                }
                for cat, rule in self.stage_rules.items()
            },
            "alert_table": {t: {k: list(v) for k, v in rows.items()} for t, rows in self.alert_table.items()},
            "false_alarm_rate": self.false_alarm_rate,
            "keyword_matchers": {k: list(v) for k, v in self.keyword_matchers.items()},
            "cost_model": {
                "unit_cost": self.cost_model.unit_cost,
                "penalty_cost": self.cost_model.penalty_cost,
                "failure_cost": self.cost_model.failure_cost,
            },
            "candidate_tactics": [t.label for t in self.candidate_tactics],
            "reference_actions": [a.to_dict() for a in self.reference_actions],
            "variables": dict(self.variables),
        }


_REQUIRED_KEYS = (
    "name", "tactic", "techniques", "system_description", "incident_description", "stage_rules",
    "alert_table", "false_alarm_rate", "keyword_matchers", "cost_model", "candidate_tactics",
)


def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise SchemaError(path, message)


def _str_list(value: Any, path: str) -> tuple[str, ...]:
    _expect(isinstance(value, list) and all(isinstance(v, str) for v in value), path,
            "expected a list of strings")
    return tuple(value)


def _probability(value: Any, path: str) -> float:
    _expect(isinstance(value, (int, float)) and not isinstance(value, bool), path, "expected a number")
    _expect(0.0 <= value <= 1.0, path, f"must lie in [0, 1], got {value}")
    return float(value)


def _stage_list(value: Any, path: str) -> tuple[str, ...]:
    stages = _str_list(value, path)
    for s in stages:
        _expect(s in STAGE_CATEGORIES, path, f"unknown stage {s!r}")
    return stages


def scenario_from_dict(data: Any) -> ScenarioSpec:
    _expect(isinstance(data, dict), "", "scenario must be a JSON object")
    for key in _REQUIRED_KEYS:
        _expect(key in data, key, "missing required key")
    _expect(isinstance(data["name"], str) and data["name"], "name", "expected a non-empty string")
    _expect(isinstance(data["tactic"], str) and data["tactic"], "tactic", "expected a non-empty string")

    rules_raw = data["stage_rules"]
    _expect(isinstance(rules_raw, dict), "stage_rules", "expected an object")
    rules = {}
    for cat in STAGE_CATEGORIES:
        path = f"stage_rules.{cat}"
        _expect(cat in rules_raw, path, "every stage needs a rule")
        raw = rules_raw[cat]
        _expect(isinstance(raw, dict), path, "expected an object")
        rules[cat] = StageRule(
            required_prior_stages=frozenset(
                _stage_list(raw.get("required_prior_stages", []), f"{path}.required_prior_stages")),
            success_probability=_probability(raw.get("success_probability", 1.0),
                                             f"{path}.success_probability"),
            also_sets=_stage_list(raw.get("also_sets", []), f"{path}.also_sets"),
        )
    for cat in rules_raw:
        _expect(cat in STAGE_CATEGORIES, f"stage_rules.{cat}", "unknown stage")

    table_raw = data["alert_table"]
    _expect(isinstance(table_raw, dict), "alert_table", "expected an object")
    table: dict[str, dict[str, tuple[str, ...]]] = {}
    for tactic, rows in table_raw.items():
        _expect(isinstance(rows, dict), f"alert_table.{tactic}", "expected an object of rows")
        table[tactic] = {}
        for key, templates in rows.items():
            path = f"alert_table.{tactic}.{key}"
            _expect(key == ANY_PROGRESS or (key.isdigit() and int(key) <= 6), path,
                    "row key must be a progress count 0..6 or '*'")
            table[tactic][key] = _str_list(templates, path)

    matchers_raw = data["keyword_matchers"]
    _expect(isinstance(matchers_raw, dict), "keyword_matchers", "expected an object")
    matchers = {}
    for cat in CATEGORIES:
        path = f"keyword_matchers.{cat}"
        _expect(cat in matchers_raw, path, "every category needs a matcher list")
        patterns = _str_list(matchers_raw[cat], path)
        for p in patterns:
            try:
                re.compile(p)
            except re.error as exc:
                raise SchemaError(path, f"bad pattern {p!r}: {exc}") from None
        matchers[cat] = patterns

    cost_raw = data["cost_model"]
    _expect(isinstance(cost_raw, dict), "cost_model", "expected an object")
    try:
        cost = CostModel(**{k: float(v) for k, v in cost_raw.items()})
    except (TypeError, ValueError) as exc:
        raise SchemaError("cost_model", str(exc)) from None

    actions = []
    for i, raw in enumerate(data.get("reference_actions", [])):
        try:
            actions.append(ResponseAction.from_dict(raw))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"reference_actions[{i}]", str(exc)) from None

    variables = data.get("variables", {})
    _expect(isinstance(variables, dict), "variables", "expected an object")

    spec = ScenarioSpec(
        name=data["name"],
        tactic=Tactic(data["tactic"]),
        technique_labels=_str_list(data["techniques"], "techniques"),
        system_description=str(data["system_description"]),
        incident_description=str(data["incident_description"]),
        stage_rules=rules,
        alert_table=table,
        false_alarm_rate=_probability(data["false_alarm_rate"], "false_alarm_rate"),
        keyword_matchers=matchers,
        cost_model=cost,
        candidate_tactics=tuple(Tactic(t) for t in _str_list(data["candidate_tactics"], "candidate_tactics")),
        reference_actions=tuple(actions),
        variables={str(k): str(v) for k, v in variables.items()},
    )
    check_templates(spec)
    return spec


def load_scenario(path: str | Path) -> ScenarioSpec:
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise SchemaError("", f"empty scenario file {path}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON in {path}: {exc}") from None
    return scenario_from_dict(data)


def _render(template: str, spec: ScenarioSpec, rng) -> str:
    values = dict(spec.variables)
    values.setdefault("sport", str(rng.randint(1024, 65535)))
    return string.Template(template).safe_substitute(values)


def check_templates(spec: ScenarioSpec) -> None:
    class _Fixed:
        @staticmethod
        def randint(a, b):
            return a

    for tactic, rows in spec.alert_table.items():
        for key, templates in rows.items():
            for t in templates:
                try:
                    parse_snort_alert_line(_render(t, spec, _Fixed))
                except UnrecognizedLine:
                    raise TemplateError(f"alert_table.{tactic}.{key}", f"unparsable template {t!r}") from None


def emit_alerts(spec: ScenarioSpec, tactic: Tactic | str, progress: int, rng) -> list[SnortAlert]:
    lines = [_render(t, spec, rng) for t in spec.alert_templates(tactic, progress)]
    pool = spec.normal_templates
    if pool and rng.random() < spec.false_alarm_rate:
        lines.append(_render(rng.choice(pool), spec, rng))
    return [parse_snort_alert_line(line) for line in lines]


def classify_action(spec: ScenarioSpec, action: ResponseAction) -> str:
    if action.category is not None:
        return action.category
    return classify_text(action.action, spec.keyword_matchers)


@functools.lru_cache(maxsize=1024)
def _compiled(pattern: str) -> re.Pattern:
    return re.compile(pattern, re.IGNORECASE)


def classify_text(text: str, matchers: dict[str, tuple[str, ...]] | dict[str, list[str]]) -> str:
    for cat in STAGE_CATEGORIES:
        for pattern in matchers.get(cat, ()):
            if _compiled(pattern).search(text):
                return cat
    return "noop"


def apply_rule(spec: ScenarioSpec, state: RecoveryState, category: str) -> RecoveryState | None:
    """State reached when ``category`` succeeds, or None if its prerequisites are unmet."""
    if category == "noop":
        return None
    rule = spec.stage_rules[category]
    if not all(state.has(c) for c in rule.required_prior_stages):
        return None
    nxt = state.with_category(category)
    for extra in rule.also_sets:
        nxt = nxt.with_category(extra)
    return nxt


@dataclass(frozen=True)
class EnvState:
    true_state: RecoveryState
    elapsed_cost: float
    rng_seed: int
    step_index: int = 0


@dataclass(frozen=True)
class Transition:
    step: int
    action: ResponseAction
    category: str
    before: RecoveryState
    after: RecoveryState
    cost: float
    observations: tuple[SnortAlert, ...]

    @property
    def flipped(self) -> bool:
        return self.after != self.before


def reset(spec: ScenarioSpec, seed: int) -> tuple[EnvState, list[SnortAlert]]:
    env = EnvState(RecoveryState.initial(), 0.0, int(seed), 0)
    return env, emit_alerts(spec, spec.tactic, 0, substream(seed, "alerts", 0))


def step(env: EnvState, spec: ScenarioSpec, action: ResponseAction
         ) -> tuple[EnvState, list[SnortAlert], bool, float, str]:
    """Advance one action. Returns (next env, observations, done, cost delta, category)."""
    if is_terminal(env.true_state):
        raise EpisodeFinished(f"episode {spec.name} already reached the terminal state")
    category = classify_action(spec, action)
    state = env.true_state
    candidate = apply_rule(spec, state, category)
    if candidate is not None:
        p = spec.stage_rules[category].success_probability
        if substream(env.rng_seed, "transition", env.step_index).random() < p:
            state = candidate
    cost = spec.cost_model.unit_cost
    obs = emit_alerts(spec, spec.tactic, state.progress,
                      substream(env.rng_seed, "alerts", env.step_index + 1))
    nxt = replace(env, true_state=state, elapsed_cost=env.elapsed_cost + cost, step_index=env.step_index + 1)
    return nxt, obs, is_terminal(state), cost, category


class ScenarioEnv:
    """Stateful wrapper that keeps the current EnvState and a transition trace."""

    def __init__(self, spec: ScenarioSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        self.state, self.initial_observations = reset(spec, seed)
        self.trace: list[Transition] = []

    @property
    def true_state(self) -> RecoveryState:
        return self.state.true_state

    @property
    def done(self) -> bool:
        return is_terminal(self.state.true_state)

    def step(self, action: ResponseAction) -> tuple[list[SnortAlert], bool, float]:
        before = self.state.true_state
        self.state, obs, done, cost, category = step(self.state, self.spec, action)
        self.trace.append(Transition(self.state.step_index, action, category, before,
                                     self.state.true_state, cost, tuple(obs)))
        return obs, done, cost
