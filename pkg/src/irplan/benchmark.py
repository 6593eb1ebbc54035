"""Multi-seed benchmark over a scenario corpus, with report emission."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

from irplan.backends.base import Backend
from irplan.metrics import ActionJudgment, judge_actions, recovery_time, trace_judge
from irplan.planner import IncidentContext, PlannerConfig, ResponsePlan, plan_episode
from irplan.rng import derive_seed
from irplan.scenario import ScenarioEnv, ScenarioSpec

BackendFactory = Callable[[ScenarioSpec, int], Backend]


@dataclass(frozen=True)
class EpisodeResult:
    incident: str
    seed: int
    recovery_time: float
    failed: bool
    steps: int
    total_cost: float
    superfluous: int
    unjudged: int = 0
    aborted: str | None = None


@dataclass
class BenchmarkReport:
    episodes: list[EpisodeResult]
    seeds: list[int]
    config: dict[str, Any]
    per_seed_mean: dict[int, float] = field(default_factory=dict)
    mean: float = 0.0
    std: float = 0.0
    failed_pct: float = 0.0

    @classmethod
    def aggregate(cls, episodes: Sequence[EpisodeResult], seeds: Sequence[int],
                  config: dict[str, Any]) -> BenchmarkReport:
        """Per-seed corpus means, then mean and population std across seeds."""
        per_seed = {}
        for s in seeds:
            times = [e.recovery_time for e in episodes if e.seed == s]
            per_seed[s] = math.fsum(times) / len(times)
        means = list(per_seed.values())
        ordered = sorted(episodes, key=lambda e: (e.incident, e.seed))
        return cls(
            episodes=ordered,
            seeds=list(seeds),
            config=config,
            per_seed_mean=per_seed,
            mean=math.fsum(means) / len(means),
            std=statistics.pstdev(means) if len(means) > 1 else 0.0,
            failed_pct=100.0 * sum(e.failed for e in episodes) / len(episodes),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "seeds": self.seeds,
            "mean_recovery_time": self.mean,
            "std_recovery_time": self.std,
            "failed_recovery_pct": self.failed_pct,
            "per_seed_mean": {str(k): v for k, v in self.per_seed_mean.items()},
            "episodes": [asdict(e) for e in self.episodes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["incident", "seed", "recovery_time", "failed", "steps", "total_cost",
                         "superfluous", "unjudged"])
        for e in self.episodes:
            writer.writerow([e.incident, e.seed, f"{e.recovery_time:g}", int(e.failed), e.steps,
                             f"{e.total_cost:g}", e.superfluous, e.unjudged])
        return buf.getvalue()

    def table(self) -> str:
        """Summary mirroring the two panels: recovery time and failed recoveries."""
        incidents = sorted({e.incident for e in self.episodes})
        width = max([len("incident")] + [len(i) for i in incidents])
        rows = [f"{'incident':<{width}}  {'recovery time':>20}  {'failed %':>8}"]
        for inc in incidents:
            eps = [e for e in self.episodes if e.incident == inc]
            times = [e.recovery_time for e in eps]
            mu = math.fsum(times) / len(times)
            sd = statistics.pstdev(times) if len(times) > 1 else 0.0
            fail = 100.0 * sum(e.failed for e in eps) / len(eps)
            rows.append(f"{inc:<{width}}  {mu:>11.2f} ± {sd:<6.2f}  {fail:>8.1f}")
        rows.append(f"{'ALL':<{width}}  {self.mean:>11.2f} ± {self.std:<6.2f}  {self.failed_pct:>8.1f}")
        rows.append(f"episodes: {len(self.episodes)}  seeds: {','.join(str(s) for s in self.seeds)}")
        return "\n".join(rows) + "\n"


def run_episode(spec: ScenarioSpec, seed: int, backend: Backend, config: PlannerConfig, *,
                judge: Backend | None = None, calibrator: Backend | None = None
                ) -> tuple[EpisodeResult, ResponsePlan, ScenarioEnv, ActionJudgment]:
    env = ScenarioEnv(spec, seed)
    plan = plan_episode(backend, IncidentContext.from_scenario(spec), config, env=env, calibrator=calibrator,
                        seed=derive_seed(seed, "plan", spec.name))
    if judge is None:
        judgment = trace_judge(env.trace[:len(plan.steps)], plan.reached_terminal)
    else:
        judgment = judge_actions(judge, spec.incident_description, plan)
    rt = recovery_time(plan, judgment, spec.cost_model)
    result = EpisodeResult(
        incident=spec.name, seed=seed, recovery_time=rt, failed=not judgment.plan_reaches_terminal,
        steps=len(plan.steps), total_cost=plan.total_cost,
        superfluous=sum(v == "superfluous" for v in judgment.verdicts), unjudged=judgment.unjudged,
        aborted=plan.aborted)
    return result, plan, env, judgment


def run_benchmark(corpus: Sequence[ScenarioSpec], config: PlannerConfig, seeds: Sequence[int],
                  backend_factory: BackendFactory, *, judge: Backend | None = None,
                  calibrator: Backend | None = None, jobs: int = 1) -> BenchmarkReport:
    """Plan every (incident, seed) pair and aggregate recovery times.

    A failing episode is recorded with the failure cost rather than stopping
    the run.
    """
    if not corpus:
        raise ValueError("benchmark corpus is empty")
    if not seeds:
        raise ValueError("benchmark needs at least one seed")
    work = [(spec, s) for spec in corpus for s in seeds]

    def one(item):
        spec, s = item
        try:
            return run_episode(spec, s, backend_factory(spec, s), config, judge=judge, calibrator=calibrator)[0]
        except Exception as exc:  # recorded, not fatal
            return EpisodeResult(spec.name, s, spec.cost_model.failure_cost, True, 0,
                                 spec.cost_model.failure_cost, 0, aborted=f"{type(exc).__name__}: {exc}")

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            episodes = list(pool.map(one, work))
    else:
        episodes = [one(w) for w in work]
    config_echo = asdict(config)
    config_echo.pop("jobs", None)
    return BenchmarkReport.aggregate(episodes, seeds, config_echo)
