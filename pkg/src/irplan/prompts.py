"""The four prompt templates: state, alert, tactic calibration, and action generation."""

from __future__ import annotations

from dataclasses import dataclass, field

from irplan.alerts import AlertPair, render_alert_pairs
from irplan.domain import ResponseAction, Tactic
from irplan.errors import MissingContext
from irplan.state import FIELD_NAMES, RecoveryState

STATE_GEN = "state_gen"
ALERT_GEN = "alert_gen"
CALIBRATION = "calibration"
ACTION_GEN = "action_gen"
TEMPLATES = (STATE_GEN, ALERT_GEN, CALIBRATION, ACTION_GEN)

RESPONSE_OPENER = "### Response:\n<think>\n"


@dataclass(frozen=True)
class PromptContext:
    system_description: str | None = None
    logs: str | None = None
    incident_description: str | None = None
    tactics: tuple[Tactic, ...] | None = None
    techniques: tuple[str, ...] | None = None
    previous_state: RecoveryState | None = None
    previous_actions: tuple[ResponseAction, ...] | None = None
    predicted_alerts: frozenset[AlertPair] | None = None
    observed_alerts: frozenset[AlertPair] | None = None
    candidate_tactics: tuple[Tactic, ...] | None = None
    # Tactic named in the alert-generation instruction.
    target_tactic: Tactic | None = None
    extra: dict = field(default_factory=dict, compare=False, hash=False)


STATE_INSTRUCTION = (
    "You have been given information about a security incident, the state of recovery from the "
    "incident, and a recovery action.\n"
    "Your task is to predict what the next state of the recovery will be after applying the "
    "recovery action.\n"
    'For example, if the given recovery action effectively contains the attack and '
    '"is_attack_contained" is "false" in the current state, then the next state should have '
    '"is_attack_contained" set to "true".\n'
    "It is also possible that multiple state properties change values from false to true. "
    "It is also possible that the state remains the same, i.e., no property changes.\n"
    "It is important that the state only changes if the action is effective in achieving one of "
    "the recovery goals: containment, information gathering, preserving evidence, eradication, "
    "hardening, or recovery.\n"
    'A state variable can only change from "false" to "true", it cannot be changed from "true" '
    'to "false".'
)

ALERT_INSTRUCTION = (
    "Generate fields produced by an intrusion detection system (e.g., Snort) during a cyberattack "
    "by an attacker following this MITRE ATT&CK tactic: {tactic}. "
    'Frame your answers as "[Classification: alert type] [Priority: level]."'
)

CALIBRATION_INSTRUCTION = (
    "Your task is to reassess the previously chosen MITRE ATT&CK tactic label(s), using the "
    "evidence in the above fields and comparing the predicted and observed alert characteristics. "
    "You must propose revised tactic candidates STRICTLY from the provided candidate tactics set, "
    "which includes the common tactics for such an incidence."
)

ACTION_INSTRUCTION = (
    "You are a security operator. "
    'The goal when selecting the recovery action is to change the state so that one of the '
    'state-properties that is currently "false" becomes "true". '
    "The ideal recovery action sequence is: 1. contain the attack 2. gather information "
    "3. preserve evidence 4. eradicate the attacker 5. harden the system 6. recover operational "
    "services.\n"
    "When selecting the recovery action, make sure that it is concrete and actionable and "
    "minimizes unnecessary service disruptions. Vague or unnecessary actions will not change the "
    "state and should be avoided.\n"
    'Return a JSON object with two properties: "Action" and "Explanation", both of which should '
    "be strings.\n"
    'The property "Action" should be a string that concisely describes the concrete recovery '
    "action.\n"
    'The property "Explanation" should be a string that concisely explains why you selected the '
    "recovery action and motivates why the action is needed."
)


def _need(value, section: str):
    if value is None:
        raise MissingContext(section)
    return value


def _state_block(state: RecoveryState) -> str:
    return "; ".join(f'"{name}": {"true" if v else "false"}' for name, v in zip(FIELD_NAMES, state))


def _actions_block(actions: tuple[ResponseAction, ...]) -> str:
    if not actions:
        return "None"
    return "\n\n".join(f"Action: {a.action}\n\nExplanation: {a.explanation}" for a in actions)


def _tactics(tactics) -> str:
    return ", ".join(str(t) for t in tactics) if tactics else "None"


def _pairs(pairs) -> str:
    return render_alert_pairs(pairs) if pairs else "None"


def _situation(ctx: PromptContext) -> list[str]:
    return [
        f"###System description: {_need(ctx.system_description, 'system description')}",
        f"###logs: {_need(ctx.logs, 'logs')}",
        f"###Incident description: {_need(ctx.incident_description, 'incident description')}",
        f"###MITRE ATT&CK tactics being used: {_tactics(_need(ctx.tactics, 'tactics'))}",
    ]


def _techniques(ctx: PromptContext) -> str:
    return f"###MITRE ATT&CK techniques being used: {', '.join(_need(ctx.techniques, 'techniques')) or 'None'}"


def render_prompt(template_id: str, ctx: PromptContext) -> str:
    if template_id == STATE_GEN:
        sections = _situation(ctx) + [
            _techniques(ctx),
            f"### Previous State: {_state_block(_need(ctx.previous_state, 'previous state'))}",
            f"###Previous recovery actions:\n\n{_actions_block(_need(ctx.previous_actions, 'previous actions'))}",
            f"###Instruction:\n{STATE_INSTRUCTION}",
        ]
    elif template_id == ALERT_GEN:
        tactic = _need(ctx.target_tactic, "target tactic")
        sections = _situation(ctx) + [
            _techniques(ctx),
            f"### Instruction:\n{ALERT_INSTRUCTION.format(tactic=tactic)}",
        ]
    elif template_id == CALIBRATION:
        sections = _situation(ctx) + [
            f"###Predicted alerts characteristics:\n{_pairs(_need(ctx.predicted_alerts, 'predicted alerts'))}",
            f"###Observed alerts characteristics:\n{_pairs(_need(ctx.observed_alerts, 'observed alerts'))}",
            f"###Candidate tactics: {_tactics(_need(ctx.candidate_tactics, 'candidate tactics'))}",
            f"### Instruction:\n{CALIBRATION_INSTRUCTION}",
        ]
    elif template_id == ACTION_GEN:
        sections = [
            f"###MITRE ATT&CK tactics being used: {_tactics(_need(ctx.tactics, 'tactics'))}",
            _techniques(ctx),
            f"### Previous State: {_state_block(_need(ctx.previous_state, 'previous state'))}",
            f"###Previous recovery actions:\n\n{_actions_block(_need(ctx.previous_actions, 'previous actions'))}",
            f"###Instruction: {ACTION_INSTRUCTION}",
        ]
    else:
        raise ValueError(f"unknown template {template_id!r}")
    return "\n\n".join(sections) + "\n\n" + RESPONSE_OPENER


SECTION_ORDER: dict[str, tuple[str, ...]] = {
    STATE_GEN: ("###System description", "###logs", "###Incident description",
                "###MITRE ATT&CK tactics being used", "###MITRE ATT&CK techniques being used",
                "### Previous State", "###Previous recovery actions", "###Instruction", "### Response"),
    ALERT_GEN: ("###System description", "###logs", "###Incident description",
                "###MITRE ATT&CK tactics being used", "###MITRE ATT&CK techniques being used",
                "### Instruction", "### Response"),
    CALIBRATION: ("###System description", "###logs", "###Incident description",
                  "###MITRE ATT&CK tactics being used", "###Predicted alerts characteristics",
                  "###Observed alerts characteristics", "###Candidate tactics", "### Instruction",
                  "### Response"),
    ACTION_GEN: ("###MITRE ATT&CK tactics being used", "###MITRE ATT&CK techniques being used",
                 "### Previous State", "###Previous recovery actions", "###Instruction", "### Response"),
}
