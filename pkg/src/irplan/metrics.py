"""State-prediction scores, recovery-time scoring and action judging."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

from irplan.backends.base import ROLE_JUDGE, Backend, GenerationRequest
from irplan.domain import CostModel, ResponseAction
from irplan.errors import BackendError, EmptySample, JudgmentMismatch, ParseError
from irplan.parsing import first_json_object, payload_of
from irplan.planner import ResponsePlan
from irplan.scenario import Transition
from irplan.state import FIELD_NAMES, RecoveryState, parse_state_text, render_state_text

log = logging.getLogger(__name__)

EFFECTIVE = "effective"
SUPERFLUOUS = "superfluous"
UNJUDGED = "unjudged"


def exact_match(prediction_text: str, label_text: str, *, strict: bool = False) -> bool:
    """True iff both texts parse to the same six flags.

    An unparsable prediction counts as a miss unless ``strict`` is set; an
    unparsable label always raises.
    """
    label = parse_state_text(label_text)
    try:
        prediction = parse_state_text(prediction_text)
    except ParseError:
        if strict:
            raise
        return False
    return prediction == label


@dataclass(frozen=True)
class EntryCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0


def f1_from_counts(tp: int, fp: int, fn: int) -> float:
    """2TP / (2TP + FP + FN); an entry never positive anywhere scores 1."""
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2 * tp / denom


@dataclass(frozen=True)
class F1Report:
    caa_f1: float
    csa_f1: float
    per_entry: dict[str, float]
    counts: dict[str, EntryCounts]
    samples: int = 0
    exact_match: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "samples": self.samples,
            "exact_match": self.exact_match,
            "caa_f1": self.caa_f1,
            "csa_f1": self.csa_f1,
            "per_entry": dict(self.per_entry),
            "counts": {k: vars(v) for k, v in self.counts.items()},
        }


def multilabel_f1(pairs: Sequence[tuple[RecoveryState, RecoveryState]]) -> F1Report:
    """Micro (pooled) and macro (per-entry mean) F1 over the six flags, positive class = true."""
    if not pairs:
        raise EmptySample("multilabel_f1 needs at least one (prediction, label) pair")
    tallies = [[0, 0, 0, 0] for _ in FIELD_NAMES]
    for pred, label in pairs:
        for j, (p, y) in enumerate(zip(pred, label)):
            tallies[j][(0 if y else 2) + (0 if p else 1)] += 1
    # tally layout: [tp, fn, fp, tn]
    counts = {name: EntryCounts(tp=t[0], fp=t[2], fn=t[1], tn=t[3]) for name, t in zip(FIELD_NAMES, tallies)}
    per_entry = {name: f1_from_counts(c.tp, c.fp, c.fn) for name, c in counts.items()}
    tp = sum(c.tp for c in counts.values())
    fp = sum(c.fp for c in counts.values())
    fn = sum(c.fn for c in counts.values())
    caa = f1_from_counts(tp, fp, fn)
    csa = sum(per_entry.values()) / len(per_entry)
    return F1Report(caa, csa, per_entry, counts, samples=len(pairs))


@dataclass(frozen=True)
class ActionJudgment:
    verdicts: tuple[str, ...]
    plan_reaches_terminal: bool
    rationale: str = ""

    @property
    def unjudged(self) -> int:
        return sum(v == UNJUDGED for v in self.verdicts)


def recovery_time(plan: ResponsePlan | Sequence[ResponseAction], judgment: ActionJudgment,
                  cost_model: CostModel | None = None) -> float:
    """Unit cost per action plus a penalty per superfluous one; a plan that never
    reaches the terminal state costs ``failure_cost`` regardless of length.

    Unjudged actions are charged the unit cost without a penalty.
    """
    cost_model = cost_model or CostModel()
    actions = plan.actions if isinstance(plan, ResponsePlan) else list(plan)
    if len(judgment.verdicts) != len(actions):
        raise JudgmentMismatch(f"{len(judgment.verdicts)} verdicts for {len(actions)} actions")
    if not judgment.plan_reaches_terminal:
        return cost_model.failure_cost
    return sum(cost_model.unit_cost + (cost_model.penalty_cost if v == SUPERFLUOUS else 0.0)
               for v in judgment.verdicts)


def trace_judge(trace: Sequence[Transition], reached_terminal: bool) -> ActionJudgment:
    """Ground-truth judge: an action is effective iff it changed the true state."""
    verdicts = tuple(EFFECTIVE if tr.flipped else SUPERFLUOUS for tr in trace)
    return ActionJudgment(verdicts, reached_terminal, "derived from environment trace")


JUDGE_PROMPT = (
    "###Incident description: {incident}\n\n"
    "###Recovery actions so far:\n{history}\n\n"
    "###Action under review: {action}\n\n"
    "###Instruction: Decide whether the action under review makes concrete progress towards "
    "containing, investigating, preserving evidence, eradicating, hardening or restoring, or whether "
    'it is superfluous. Return a JSON object with the properties "verdict" (either "effective" or '
    '"superfluous") and "rationale".\n\n'
    "### Response:\n<think>\n"
)


def judge_actions(judge: Backend, incident_description: str, plan: ResponsePlan, *,
                  temperature: float = 0.0) -> ActionJudgment:
    """Ask a model for one verdict per action.

    Transport or parse failures mark that action ``unjudged`` instead of
    failing the whole plan.
    """
    verdicts = []
    notes = []
    for i, action in enumerate(plan.actions):
        history = "\n".join(f"{j + 1}. {a.action}" for j, a in enumerate(plan.actions[:i])) or "None"
        prompt = JUDGE_PROMPT.format(incident=incident_description, history=history, action=action.action)
        try:
            text = judge.generate(GenerationRequest(prompt, temperature=temperature, role=ROLE_JUDGE,
                                                    sample_index=i))
            obj = first_json_object(payload_of(text))
            verdict = str(obj.get("verdict", "")).strip().casefold()
            if verdict not in (EFFECTIVE, SUPERFLUOUS):
                raise ParseError(f"unknown verdict {verdict!r}")
            notes.append(str(obj.get("rationale", "")))
        except (BackendError, ParseError) as exc:
            log.warning("action %d left unjudged: %s", i + 1, exc)
            verdict = UNJUDGED
            notes.append(f"unjudged: {exc}")
        verdicts.append(verdict)
    return ActionJudgment(tuple(verdicts), plan.reached_terminal, "\n".join(notes))


@dataclass(frozen=True)
class StateRecord:
    instruction: str
    answer: RecoveryState
    prediction: str | None = None


@dataclass
class StateCorpus:
    records: list[StateRecord] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)


def _answer_text(answer: Any) -> str:
    return answer if isinstance(answer, str) else json.dumps(answer)


def load_state_corpus(path: str | Path) -> StateCorpus:
    """Read an instruction/answer corpus.

    Accepts either a list of ``{"instruction", "answer"}`` records (optionally
    with a stored ``"prediction"``) or parallel ``"instructions"`` and
    ``"answers"`` lists. Records whose answer does not parse are skipped and
    reported, not fatal.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict) and "instructions" in data:
        raw = [{"instruction": i, "answer": a} for i, a in zip(data["instructions"], data["answers"])]
    elif isinstance(data, list):
        raw = data
    else:
        raise ParseError(f"{path}: expected a list of records or instructions/answers lists")
    corpus = StateCorpus()
    for i, rec in enumerate(raw):
        try:
            if not isinstance(rec, dict) or not isinstance(rec.get("instruction"), str):
                raise ParseError("record lacks an instruction string")
            answer = parse_state_text(_answer_text(rec["answer"]))
            pred = rec.get("prediction")
            corpus.records.append(StateRecord(rec["instruction"], answer,
                                              None if pred is None else _answer_text(pred)))
        except (ParseError, KeyError) as exc:
            log.warning("skipping corpus record %d: %s", i, exc)
            corpus.skipped.append(f"record {i}: {exc}")
    return corpus


def is_state_corpus(data: Any) -> bool:
    if isinstance(data, dict):
        return "instructions" in data and "answers" in data
    return isinstance(data, list) and bool(data) and isinstance(data[0], dict) and "instruction" in data[0]


def evaluate_states(records: Iterable[StateRecord], backend: Backend | None = None, *,
                    temperature: float = 0.6) -> tuple[F1Report, list[bool]]:
    """Exact-match rate and multi-label F1 for state predictions.

    Records without a stored prediction are sent to ``backend``. An
    unparsable prediction counts as an exact-match miss and, for F1, as the
    all-false state.
    """
    matches = []
    pairs = []
    for i, rec in enumerate(records):
        text = rec.prediction
        if text is None:
            if backend is None:
                raise ValueError("record has no prediction and no backend was given")
            text = backend.generate(GenerationRequest(rec.instruction, temperature=temperature, seed=i))
        matches.append(exact_match(text, render_state_text(rec.answer)))
        try:
            pred = parse_state_text(text)
        except ParseError:
            pred = RecoveryState.initial()
        pairs.append((pred, rec.answer))
    report = multilabel_f1(pairs)
    return F1Report(report.caa_f1, report.csa_f1, report.per_entry, report.counts, report.samples,
                    sum(matches) / len(matches)), matches
