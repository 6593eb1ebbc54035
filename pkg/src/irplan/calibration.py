"""Unique-pair alert scoring, the precision gate and tactic re-conjecture."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from irplan.alerts import AlertPair, extract_alert_pairs
from irplan.backends.base import ROLE_CALIBRATE, ROLE_SCREEN, Backend, GenerationRequest, default_max_tokens
from irplan.domain import Tactic
from irplan.parsing import iter_json_objects, payload_of
from irplan.prompts import ALERT_GEN, CALIBRATION, PromptContext, render_prompt
from irplan.rng import derive_seed

DEFAULT_THRESHOLD = 0.6


@dataclass(frozen=True)
class PairScore:
    precision: float
    recall: float
    overlap: int
    predicted_count: int
    observed_count: int


def unique_pair_score(predicted: frozenset[AlertPair], observed: frozenset[AlertPair]) -> PairScore:
    """Set-overlap precision and recall.

    An empty prediction has precision 1 (it claims nothing false); an empty
    observation has recall 1.
    """
    predicted, observed = frozenset(predicted), frozenset(observed)
    overlap = len(predicted & observed)
    precision = overlap / len(predicted) if predicted else 1.0
    recall = overlap / len(observed) if observed else 1.0
    return PairScore(precision, recall, overlap, len(predicted), len(observed))


def needs_calibration(score: PairScore, threshold: float = DEFAULT_THRESHOLD) -> bool:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return score.precision < threshold


def parse_tactic_label(text: str, candidates: tuple[Tactic, ...]) -> Tactic | None:
    """Map a calibrator answer onto the candidate set, or None if it names anything else."""
    payload = payload_of(text).strip()
    label = None
    for obj in iter_json_objects(payload):
        for key, value in obj.items():
            if str(key).casefold() in ("tactic", "tactics", "revised_tactic", "label"):
                if isinstance(value, list) and value:
                    value = value[0]
                if isinstance(value, str):
                    label = value
                break
        break
    if label is None:
        lines = [ln for ln in payload.splitlines() if ln.strip()]
        if not lines:
            return None
        label = lines[0].rsplit(":", 1)[-1]
    label = label.strip().strip("\"'`*.,;[]() ")
    for t in candidates:
        if t.matches(label):
            return t
    return None


@dataclass(frozen=True)
class Recalibration:
    tactic: Tactic
    rejected: bool
    responses: tuple[str, ...] = field(default=(), repr=False)


def recalibrate_tactic(calibrator: Backend, ctx: PromptContext, incumbent: Tactic, *,
                       temperature: float = 0.6, seed: int = 0, attempts: int = 2) -> Recalibration:
    """Ask for a revised tactic; fall back to ``incumbent`` if no answer lies in the candidate set."""
    candidates = tuple(ctx.candidate_tactics or ())
    if not candidates:
        raise ValueError("calibration needs a non-empty candidate tactic set")
    prompt = render_prompt(CALIBRATION, ctx)
    responses = []
    for attempt in range(attempts):
        text = calibrator.generate(GenerationRequest(
            prompt, temperature=temperature, max_tokens=default_max_tokens(CALIBRATION),
            seed=derive_seed(seed, "calibrate", attempt), template=CALIBRATION, context=ctx,
            role=ROLE_CALIBRATE, sample_index=attempt))
        responses.append(text)
        tactic = parse_tactic_label(text, candidates)
        if tactic is not None:
            return Recalibration(tactic, False, tuple(responses))
    return Recalibration(incumbent, True, tuple(responses))


@dataclass(frozen=True)
class Screening:
    tactic: Tactic
    scores: dict[str, PairScore]
    predicted: dict[str, frozenset[AlertPair]]
    passed: bool


def screen_tactics(backend: Backend, ctx: PromptContext, candidates: tuple[Tactic, ...],
                   observed: frozenset[AlertPair], *, threshold: float = DEFAULT_THRESHOLD,
                   temperature: float = 0.6, seed: int = 0) -> Screening:
    """Pick the candidate whose generated alerts best match the incident logs.

    One alert generation per candidate; ties go to the earlier candidate.
    """
    scores: dict[str, PairScore] = {}
    predicted: dict[str, frozenset[AlertPair]] = {}
    best: Tactic | None = None
    for i, tactic in enumerate(candidates):
        tctx = replace(ctx, target_tactic=tactic)
        text = backend.generate(GenerationRequest(
            render_prompt(ALERT_GEN, tctx), temperature=temperature, max_tokens=default_max_tokens(ALERT_GEN),
            seed=derive_seed(seed, "screen", i), template=ALERT_GEN, context=tctx, role=ROLE_SCREEN))
        pairs = extract_alert_pairs(payload_of(text))
        predicted[tactic.label] = pairs
        scores[tactic.label] = unique_pair_score(pairs, observed)
        if best is None or scores[tactic.label].precision > scores[best.label].precision:
            best = tactic
    assert best is not None
    return Screening(best, scores, predicted, not needs_calibration(scores[best.label], threshold))
