"""Online lookahead planning with a generative world model and tactic re-conjecture.

Each step samples N candidate actions at the current estimated state, scores
every candidate by the mean cost of M simulated recovery trajectories, executes
the cheapest one, predicts its outcome, and compares predicted against
observed alerts to decide whether the conjectured tactic needs revising.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

from irplan.alerts import AlertPair, SnortAlert, extract_alert_pairs, observed_pairs
from irplan.backends.base import (ROLE_PROPOSE, ROLE_ROLLOUT, ROLE_SIMULATE, Backend, CountingBackend,
                                  GenerationRequest, default_max_tokens, parse_action_object)
from irplan.calibration import (PairScore, needs_calibration, recalibrate_tactic, screen_tactics,
                                unique_pair_score)
from irplan.domain import CostModel, HistoryLog, ResponseAction, Tactic
from irplan.errors import (BackendError, EmptyCandidates, IRPlanError, NoViableCandidates, ParseError,
                           SimulationParseError)
from irplan.parsing import payload_of
from irplan.prompts import ACTION_GEN, ALERT_GEN, STATE_GEN, PromptContext, render_prompt
from irplan.rng import derive_seed
from irplan.scenario import ScenarioEnv, ScenarioSpec
from irplan.state import RecoveryState, is_terminal, merge_monotone, parse_state_text

TIE_BREAKS = ("first_sampled",)


@dataclass(frozen=True)
class PlannerConfig:
    action_batch: int = 3
    trajectory_batch: int = 3
    rollout_horizon: int = 20  # also caps executed steps per episode
    temperature: float = 0.6
    failure_cost: float = 20.0
    tie_break: str = "first_sampled"
    calibration_threshold: float = 0.6
    # Attempts per candidate slot: one draw plus two retries.
    proposal_attempts: int = 3
    jobs: int = 1

    def __post_init__(self):
        if min(self.action_batch, self.trajectory_batch, self.rollout_horizon) < 1:
            raise ValueError("action_batch, trajectory_batch and rollout_horizon must be >= 1")
        if self.failure_cost < 1:
            raise ValueError("failure_cost must be >= 1")
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"unknown tie_break {self.tie_break!r}")
        if not 0.0 <= self.calibration_threshold <= 1.0:
            raise ValueError("calibration_threshold must lie in [0, 1]")
        if self.proposal_attempts < 1 or self.jobs < 1:
            raise ValueError("proposal_attempts and jobs must be >= 1")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PlannerConfig:
        aliases = {"N": "action_batch", "M": "trajectory_batch", "H": "rollout_horizon",
                   "tau_ap": "calibration_threshold"}
        return cls(**{aliases.get(k, k): v for k, v in d.items()})


@dataclass(frozen=True)
class IncidentContext:
    """Static incident information the agent sees (never the true tactic or dynamics)."""

    system_description: str
    incident_description: str
    techniques: tuple[str, ...] = ()
    candidate_tactics: tuple[Tactic, ...] = ()
    tactic_hint: Tactic | None = None

    @classmethod
    def from_scenario(cls, spec: ScenarioSpec) -> IncidentContext:
        return cls(spec.system_description, spec.incident_description, spec.technique_labels,
                   spec.candidate_tactics, None if spec.candidate_tactics else spec.tactic)


class WorldModel:
    """Builds prompt contexts and requests for one episode and parses the generations."""

    def __init__(self, backend: Backend, incident: IncidentContext, temperature: float = 0.6):
        self.backend = backend
        self.incident = incident
        self.temperature = temperature

    def context(self, state: RecoveryState, actions: Sequence[ResponseAction], tactic: Tactic,
                logs: str, **extra) -> PromptContext:
        return PromptContext(
            system_description=self.incident.system_description,
            logs=logs or "None",
            incident_description=self.incident.incident_description,
            tactics=(tactic,),
            techniques=tuple(self.incident.techniques),
            previous_state=state,
            previous_actions=tuple(actions),
            candidate_tactics=tuple(self.incident.candidate_tactics) or None,
            target_tactic=tactic,
            **extra,
        )

    def _request(self, template: str, ctx: PromptContext, seed: int, role: str, sample_index: int = 0):
        return GenerationRequest(render_prompt(template, ctx), temperature=self.temperature,
                                 max_tokens=default_max_tokens(template), seed=seed, template=template,
                                 context=ctx, role=role, sample_index=sample_index)

    def sample_action(self, ctx: PromptContext, seed: int, role: str, sample_index: int = 0) -> ResponseAction:
        text = self.backend.generate(self._request(ACTION_GEN, ctx, seed, role, sample_index))
        return parse_action_object(text)

    def next_state(self, ctx: PromptContext, seed: int) -> RecoveryState:
        text = self.backend.generate(self._request(STATE_GEN, ctx, seed, ROLE_SIMULATE))
        return parse_state_text(text)

    def alerts(self, ctx: PromptContext, seed: int) -> frozenset[AlertPair]:
        text = self.backend.generate(self._request(ALERT_GEN, ctx, seed, ROLE_SIMULATE))
        return extract_alert_pairs(payload_of(text))


def propose_actions(wm: WorldModel, history: HistoryLog, state: RecoveryState, tactic: Tactic, n: int, *,
                    seed: int = 0, attempts: int = 3) -> list[ResponseAction]:
    """Sample ``n`` candidates; unparsable draws are retried, then dropped."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ctx = wm.context(state, history.actions, tactic, history.log_text())
    actions = []
    for k in range(n):
        for attempt in range(attempts):
            try:
                actions.append(wm.sample_action(ctx, derive_seed(seed, "propose", k, attempt), ROLE_PROPOSE,
                                                sample_index=k + attempt * n))
                break
            except ParseError:
                continue
    if not actions:
        raise NoViableCandidates(f"all {n * attempts} action generations failed to parse")
    return actions


def _retry_once(fn, *args):
    try:
        return fn(*args, 0)
    except ParseError:
        pass
    try:
        return fn(*args, 1)
    except ParseError as exc:
        raise SimulationParseError(str(exc)) from exc


def simulate_transition(wm: WorldModel, history: HistoryLog, state: RecoveryState, action: ResponseAction,
                        tactic: Tactic, *, seed: int = 0, prior_actions: Sequence[ResponseAction] | None = None,
                        with_alerts: bool = True) -> tuple[RecoveryState, frozenset[AlertPair]]:
    """Predict (next state, next alerts) for ``action``; regressions in the state are merged away."""
    actions = list(history.actions if prior_actions is None else prior_actions) + [action]
    ctx = wm.context(state, actions, tactic, history.log_text())
    predicted = _retry_once(lambda attempt: wm.next_state(ctx, derive_seed(seed, "state", attempt)))
    nxt = merge_monotone(state, predicted)
    alerts: frozenset[AlertPair] = frozenset()
    if with_alerts:
        alerts = wm.alerts(ctx, derive_seed(seed, "state", 0))
    return nxt, alerts


@dataclass(frozen=True)
class Rollout:
    cost: float
    terminated: bool
    failed: bool = False
    depth: int = 0
    # Estimated states visited, starting state first.
    path: tuple[RecoveryState, ...] = ()


def recovery_to_go(wm: WorldModel, history: HistoryLog, state: RecoveryState, action: ResponseAction,
                   tactic: Tactic, config: PlannerConfig, cost_model: CostModel | None = None, *,
                   seed: int = 0) -> Rollout:
    """Cost of one simulated trajectory from (state, action) to the terminal state.

    A trajectory that has not terminated after ``rollout_horizon`` simulated
    steps costs ``failure_cost`` outright, as does one whose generations
    cannot be parsed after a retry.
    """
    cost_model = cost_model or CostModel(failure_cost=config.failure_cost)
    actions = list(history.actions)
    logs = history.log_text()
    total = 0.0
    s, a = state, action
    path = [state]
    for depth in range(1, config.rollout_horizon + 1):
        actions.append(a)
        ctx = wm.context(s, actions, tactic, logs)
        try:
            predicted = _retry_once(lambda attempt: wm.next_state(ctx, derive_seed(seed, depth, "state", attempt)))
        except SimulationParseError:
            return Rollout(config.failure_cost, False, True, depth, tuple(path))
        s_next = merge_monotone(s, predicted)
        path.append(s_next)
        total += cost_model.cost(s, a)
        if is_terminal(s_next):
            return Rollout(total, True, False, depth, tuple(path))
        actx = wm.context(s_next, actions, tactic, logs)
        try:
            a = _retry_once(lambda attempt: wm.sample_action(actx, derive_seed(seed, depth, "action", attempt),
                                                             ROLE_ROLLOUT, attempt))
        except SimulationParseError:
            return Rollout(config.failure_cost, False, True, depth, tuple(path))
        s = s_next
    return Rollout(config.failure_cost, False, False, config.rollout_horizon, tuple(path))


@dataclass(frozen=True)
class QEstimate:
    action: ResponseAction
    mean_cost: float
    samples: tuple[float, ...]
    terminated_fraction: float
    failed_rollouts: int = 0

    @classmethod
    def from_rollouts(cls, action: ResponseAction, rollouts: Sequence[Rollout]) -> QEstimate:
        samples = tuple(r.cost for r in rollouts)
        return cls(action, math.fsum(samples) / len(samples), samples,
                   sum(r.terminated for r in rollouts) / len(rollouts), sum(r.failed for r in rollouts))

    def to_dict(self) -> dict[str, Any]:
        return {"action": self.action.to_dict(), "mean_cost": self.mean_cost, "samples": list(self.samples),
                "terminated_fraction": self.terminated_fraction, "failed_rollouts": self.failed_rollouts}


def _map(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


def estimate_q(wm: WorldModel, history: HistoryLog, state: RecoveryState, action: ResponseAction,
               tactic: Tactic, config: PlannerConfig, cost_model: CostModel | None = None, *,
               seed: int = 0) -> QEstimate:
    """Sample-mean cost-to-go of ``action`` over ``trajectory_batch`` independent rollouts."""
    rollouts = _map(
        lambda i: recovery_to_go(wm, history, state, action, tactic, config, cost_model,
                                 seed=derive_seed(seed, "rollout", i)),
        list(range(config.trajectory_batch)), config.jobs)
    return QEstimate.from_rollouts(action, rollouts)


def argmin_index(candidates: Sequence[QEstimate], tie_break: str = "first_sampled") -> int:
    if not candidates:
        raise EmptyCandidates("no candidate actions to choose from")
    if tie_break not in TIE_BREAKS:
        raise ValueError(f"unknown tie_break {tie_break!r}")
    return min(range(len(candidates)), key=lambda i: (candidates[i].mean_cost, i))


def select_action(candidates: Sequence[QEstimate], tie_break: str = "first_sampled") -> ResponseAction:
    return candidates[argmin_index(candidates, tie_break)].action


class ObservationFeed:
    """Pre-recorded observations for planning without an environment."""

    def __init__(self, initial: Iterable[SnortAlert] = (), steps: Iterable[Iterable[SnortAlert]] = ()):
        self.initial = list(initial)
        self._steps = [list(s) for s in steps]
        self._i = 0

    def next(self) -> list[SnortAlert] | None:
        if self._i >= len(self._steps):
            return None
        self._i += 1
        return self._steps[self._i - 1]


@dataclass(frozen=True)
class PlanStep:
    index: int
    chosen: ResponseAction
    chosen_index: int
    candidates: tuple[QEstimate, ...]
    predicted_state: RecoveryState
    predicted_alerts: frozenset[AlertPair]
    observed_alerts: frozenset[AlertPair] | None
    tactic_before: Tactic
    tactic_after: Tactic
    calibrated: bool
    cost: float
    pair_score: PairScore | None = None
    gate_triggered: bool = False
    calibration_rejected: bool = False
    true_state: RecoveryState | None = None
    backend_calls: int = 0
    prompt_digest: str = ""
    proposal_fingerprint: str = ""
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        score = self.pair_score
        return {
            "index": self.index,
            "chosen": self.chosen.to_dict(),
            "chosen_index": self.chosen_index,
            "candidates": [q.to_dict() for q in self.candidates],
            "predicted_state": self.predicted_state.to_dict(),
            "predicted_alerts": sorted(p.render() for p in self.predicted_alerts),
            "observed_alerts": None if self.observed_alerts is None
            else sorted(p.render() for p in self.observed_alerts),
            "tactic_before": self.tactic_before.label,
            "tactic_after": self.tactic_after.label,
            "calibrated": self.calibrated,
            "gate_triggered": self.gate_triggered,
            "calibration_rejected": self.calibration_rejected,
            "pair_score": None if score is None else {
                "precision": score.precision, "recall": score.recall, "overlap": score.overlap,
                "predicted_count": score.predicted_count, "observed_count": score.observed_count},
            "cost": self.cost,
            "true_state": None if self.true_state is None else self.true_state.to_dict(),
            "backend_calls": self.backend_calls,
            "prompt_digest": self.prompt_digest,
            "proposal_fingerprint": self.proposal_fingerprint,
            "seed": self.seed,
        }


@dataclass
class ResponsePlan:
    steps: list[PlanStep] = field(default_factory=list)
    total_cost: float = 0.0
    reached_terminal: bool = False
    initial_tactic: Tactic | None = None
    screening: dict[str, Any] | None = None
    aborted: str | None = None
    seed: int = 0

    @property
    def actions(self) -> list[ResponseAction]:
        return [s.chosen for s in self.steps]

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "initial_tactic": None if self.initial_tactic is None else self.initial_tactic.label,
            "screening": self.screening,
            "steps": [s.to_dict() for s in self.steps],
            "total_cost": self.total_cost,
            "reached_terminal": self.reached_terminal,
            "aborted": self.aborted,
        }

    def listing(self) -> str:
        """Numbered actions with explanations, one block per step."""
        lines = []
        for i, step in enumerate(self.steps, 1):
            lines.append(f"{i}. {step.chosen.action}")
            if step.chosen.explanation:
                lines.append(f"   {step.chosen.explanation}")
        lines.append("")
        lines.append(f"total cost: {self.total_cost:g}")
        lines.append(f"reached terminal: {'yes' if self.reached_terminal else 'no'}")
        if self.aborted:
            lines.append(f"aborted: {self.aborted}")
        return "\n".join(lines) + "\n"


def _digest(fingerprints: list[str]) -> str:
    return hashlib.sha256("\n".join(sorted(fingerprints)).encode()).hexdigest()


def plan_episode(backend: Backend, incident: IncidentContext, config: PlannerConfig, *,
                 env: ScenarioEnv | None = None, feed: ObservationFeed | None = None,
                 calibrator: Backend | None = None, cost_model: CostModel | None = None,
                 seed: int = 0) -> ResponsePlan:
    """Run one planning episode against an environment or an observation feed.

    The loop ends when the estimated state is terminal, the environment
    reports completion, or ``rollout_horizon`` steps have been executed.
    Backend and parse failures end the episode early; the partial plan is
    returned with ``aborted`` set.
    """
    if env is None and feed is None:
        feed = ObservationFeed()
    counter = CountingBackend(backend)
    calib = counter if calibrator is None or calibrator is backend else CountingBackend(calibrator)
    wm = WorldModel(counter, incident, config.temperature)
    cost_model = cost_model or (env.spec.cost_model if env is not None else CostModel())
    cost_model = replace(cost_model, failure_cost=config.failure_cost)

    initial_obs = env.initial_observations if env is not None else feed.initial
    candidates = tuple(incident.candidate_tactics)
    tactic = incident.tactic_hint or (candidates[0] if candidates else Tactic("Unknown"))
    history = HistoryLog(tactic)
    history.append(initial_obs)
    plan = ResponsePlan(seed=seed)

    try:
        if candidates:
            base_ctx = wm.context(RecoveryState.initial(), (), tactic, history.log_text())
            screening = screen_tactics(wm.backend, base_ctx, candidates, observed_pairs(initial_obs),
                                       threshold=config.calibration_threshold, temperature=config.temperature,
                                       seed=derive_seed(seed, "screen"))
            tactic = screening.tactic
            plan.screening = {
                "scores": {k: v.precision for k, v in screening.scores.items()},
                "passed": screening.passed,
            }
            if not screening.passed:
                ctx = replace(base_ctx, tactics=(tactic,), predicted_alerts=screening.predicted[tactic.label],
                              observed_alerts=observed_pairs(initial_obs))
                recal = recalibrate_tactic(calib, ctx, tactic, temperature=config.temperature,
                                           seed=derive_seed(seed, "calibrate", "initial"))
                tactic = recal.tactic
                plan.screening["calibrated_to"] = tactic.label
                plan.screening["rejected"] = recal.rejected
        history.current_tactic = tactic
        plan.initial_tactic = tactic
    except (BackendError, IRPlanError) as exc:
        plan.aborted = f"{type(exc).__name__}: {exc}"

    estimate = RecoveryState.initial()
    t = 0
    while plan.aborted is None and t < config.rollout_horizon and not is_terminal(estimate):
        if env is not None and env.done:
            break
        step_seed = derive_seed(seed, "step", t)
        calls_before, fps_before = counter.snapshot()
        try:
            proposals = propose_actions(wm, history, estimate, tactic, config.action_batch,
                                        seed=step_seed, attempts=config.proposal_attempts)
            jobs = [(k, i) for k in range(len(proposals)) for i in range(config.trajectory_batch)]
            rollouts = _map(
                lambda ki: recovery_to_go(wm, history, estimate, proposals[ki[0]], tactic, config, cost_model,
                                          seed=derive_seed(step_seed, "candidate", ki[0], "rollout", ki[1])),
                jobs, config.jobs)
            qs = tuple(
                QEstimate.from_rollouts(a, rollouts[k * config.trajectory_batch:(k + 1) * config.trajectory_batch])
                for k, a in enumerate(proposals))
            idx = argmin_index(qs, config.tie_break)
            chosen = proposals[idx]

            if env is not None:
                obs, _, cost = env.step(chosen)
            else:
                obs, cost = feed.next(), cost_model.unit_cost

            predicted_state, predicted_alerts = simulate_transition(
                wm, history, estimate, chosen, tactic, seed=derive_seed(step_seed, "execute"))

            observed = observed_pairs(obs) if obs is not None else None
            score = gate = None
            tactic_after, calibrated, rejected = tactic, False, False
            if observed is not None:
                score = unique_pair_score(predicted_alerts, observed)
                gate = needs_calibration(score, config.calibration_threshold)
                if gate and candidates:
                    ctx = replace(wm.context(predicted_state, history.actions + [chosen], tactic,
                                             history.log_text()),
                                  predicted_alerts=predicted_alerts, observed_alerts=observed)
                    recal = recalibrate_tactic(calib, ctx, tactic, temperature=config.temperature,
                                               seed=derive_seed(step_seed, "calibrate"))
                    tactic_after, calibrated, rejected = recal.tactic, True, recal.rejected
        except (BackendError, IRPlanError) as exc:
            plan.aborted = f"{type(exc).__name__}: {exc}"
            break

        calls_after, fps_after = counter.snapshot()
        new_fps = fps_after[len(fps_before):]
        proposal_ctx = wm.context(estimate, history.actions, tactic, history.log_text())
        history.append(obs or (), chosen)
        history.current_tactic = tactic_after
        plan.steps.append(PlanStep(
            index=t, chosen=chosen, chosen_index=idx, candidates=qs, predicted_state=predicted_state,
            predicted_alerts=predicted_alerts, observed_alerts=observed, tactic_before=tactic,
            tactic_after=tactic_after, calibrated=calibrated, cost=cost, pair_score=score,
            gate_triggered=bool(gate), calibration_rejected=rejected,
            true_state=env.true_state if env is not None else None,
            backend_calls=calls_after - calls_before, prompt_digest=_digest(new_fps),
            proposal_fingerprint=hashlib.sha256(render_prompt(ACTION_GEN, proposal_ctx).encode()).hexdigest(),
            seed=step_seed,
        ))
        estimate = predicted_state
        tactic = tactic_after
        t += 1

    plan.reached_terminal = env.done if env is not None else is_terminal(estimate)
    if plan.aborted is not None:
        plan.reached_terminal = False
    plan.total_cost = math.fsum(s.cost for s in plan.steps) + (0.0 if plan.reached_terminal
                                                                else config.failure_cost)
    return plan
