"""Command-line entry point: plan, simulate and evaluate.

Configuration comes from one JSON file; command-line flags override it.
Exit codes: 0 success, 1 run failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from irplan.backends import (
    Cassette,
    ChatCompletionsBackend,
    ScriptedBackend,
    TabularBackend,
    noop_backend,
    oracle_backend,
)
from irplan.benchmark import run_benchmark, run_episode
from irplan.errors import ConfigError, IRPlanError
from irplan.metrics import evaluate_states, is_state_corpus, load_state_corpus
from irplan.planner import IncidentContext, ObservationFeed, PlannerConfig, plan_episode
from irplan.scenario import ScenarioSpec, load_scenario, reset
from irplan.rng import derive_seed

log = logging.getLogger("irplan")

BACKEND_KINDS = ("oracle", "noop", "scripted", "tabular", "http")
CASSETTE_MODES = ("off", "record", "replay")


@dataclass
class RunConfig:
    backend: str = "oracle"
    backend_file: str | None = None
    endpoint: str | None = None
    model: str | None = None
    auth_env: str | None = None
    timeout: float = 120.0
    planner: dict[str, Any] = field(default_factory=dict)
    scenario: str | None = None
    corpus: str | None = None
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "out"
    cassette_mode: str = "off"
    cassette_path: str | None = None
    jobs: int = 1

    def validate(self) -> None:
        if self.backend not in BACKEND_KINDS:
            raise ConfigError(f"unknown backend {self.backend!r}; expected one of {', '.join(BACKEND_KINDS)}")
        if self.cassette_mode not in CASSETTE_MODES:
            raise ConfigError(f"unknown cassette mode {self.cassette_mode!r}")
        if self.cassette_mode != "off" and self.backend != "http":
            raise ConfigError("cassettes only apply to the http backend")
        if self.cassette_mode == "replay" and (not self.cassette_path or not Path(self.cassette_path).is_file()):
            raise ConfigError(f"replay mode needs an existing cassette, got {self.cassette_path!r}")
        if self.cassette_mode == "record" and not self.cassette_path:
            raise ConfigError("record mode needs --cassette-path")
        if self.backend in ("scripted", "tabular") and not self.backend_file:
            raise ConfigError(f"the {self.backend} backend needs --backend-file")
        if self.backend == "http" and (not self.endpoint or not self.model):
            raise ConfigError("the http backend needs endpoint and model in the config")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.jobs < 1:
            raise ConfigError("--jobs must be at least 1")

    def planner_config(self) -> PlannerConfig:
        try:
            return PlannerConfig.from_dict({**self.planner, "jobs": self.jobs})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"planner config: {exc}") from None


def _read_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge the config file with flag overrides; flags win."""
    raw = _read_config(args.config)
    backend = raw.get("backend", {})
    if isinstance(backend, str):
        backend = {"kind": backend}
    cassette = raw.get("cassette", {})
    if isinstance(cassette, str):
        cassette = {"mode": cassette}
    seeds = raw.get("seeds", [raw["seed"]] if "seed" in raw else [0])
    cfg = RunConfig(
        backend=backend.get("kind", "oracle"),
        backend_file=backend.get("path"),
        endpoint=backend.get("endpoint"),
        model=backend.get("model"),
        auth_env=backend.get("auth_env"),
        timeout=float(backend.get("timeout", 120.0)),
        planner=dict(raw.get("planner", {})),
        scenario=raw.get("scenario"),
        corpus=raw.get("corpus"),
        seeds=[int(s) for s in seeds],
        out=raw.get("out", "out"),
        cassette_mode=cassette.get("mode", "off"),
        cassette_path=cassette.get("path"),
        jobs=int(raw.get("jobs", os.cpu_count() or 1)),
    )
    if args.backend is not None:
        cfg.backend = args.backend
    if args.backend_file is not None:
        cfg.backend_file = args.backend_file
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.seeds is not None:
        cfg.seeds = args.seeds
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.cassette is not None:
        cfg.cassette_mode = args.cassette
    if args.cassette_path is not None:
        cfg.cassette_path = args.cassette_path
    if args.out is not None:
        cfg.out = args.out
    for name in ("N", "M", "H"):
        value = getattr(args, name)
        if value is not None:
            cfg.planner[name] = value
    target = getattr(args, "target", None)
    if target is not None:
        if args.command == "evaluate":
            cfg.corpus = target
        else:
            cfg.scenario = target
    cfg.validate()
    return cfg


def bundled_scenarios() -> list[Path]:
    root = resources.files("irplan") / "data" / "scenarios"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json"))


def resolve_scenario(name: str | None) -> Path:
    """A path, or the stem of a bundled scenario."""
    if not name:
        raise ConfigError("no scenario given")
    p = Path(name)
    if p.is_file():
        return p
    for b in bundled_scenarios():
        if b.stem == name:
            return b
    raise ConfigError(f"scenario not found: {name}")


def make_backend(cfg: RunConfig, spec: ScenarioSpec | None, seed: int):
    if cfg.backend == "oracle":
        if spec is None:
            raise ConfigError("the oracle backend needs a scenario")
        return oracle_backend(spec, seed=seed)
    if cfg.backend == "noop":
        return noop_backend()
    if cfg.backend == "scripted":
        return ScriptedBackend.load(cfg.backend_file)
    if cfg.backend == "tabular":
        return TabularBackend.load(cfg.backend_file)
    cassette = None
    if cfg.cassette_mode == "replay":
        cassette = Cassette.load(cfg.cassette_path)
    elif cfg.cassette_mode == "record":
        cassette = Cassette(cfg.cassette_path)
    return ChatCompletionsBackend(cfg.endpoint, cfg.model, auth_env=cfg.auth_env, timeout=cfg.timeout,
                                  cassette=cassette, cassette_mode=cfg.cassette_mode)


def _close(backend) -> None:
    close = getattr(backend, "close", None)
    if close is not None:
        close()


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    return path


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def cmd_plan(cfg: RunConfig) -> int:
    """Plan against the incident's initial alerts only (no environment feedback)."""
    spec = load_scenario(resolve_scenario(cfg.scenario))
    seed = cfg.seeds[0]
    backend = make_backend(cfg, spec, seed)
    _, initial = reset(spec, seed)
    try:
        plan = plan_episode(backend, IncidentContext.from_scenario(spec), cfg.planner_config(),
                            feed=ObservationFeed(initial), seed=derive_seed(seed, "plan", spec.name))
    finally:
        _close(backend)
    out = Path(cfg.out)
    audit = {"scenario": spec.name, "backend": cfg.backend, "plan": plan.to_dict()}
    _write(out, "plan.json", _dump(audit))
    _write(out, "plan.txt", f"Response actions for {spec.name}\n\n" + plan.listing())
    print(plan.listing(), end="")
    return 1 if plan.aborted else 0


def _trace_dict(env) -> list[dict[str, Any]]:
    return [{
        "step": tr.step,
        "action": tr.action.action,
        "category": tr.category,
        "before": tr.before.bits,
        "after": tr.after.bits,
        "cost": tr.cost,
        "observations": [a.raw for a in tr.observations],
    } for tr in env.trace]


def cmd_simulate(cfg: RunConfig) -> int:
    """Plan with the scenario environment in the loop and record the true trajectory."""
    spec = load_scenario(resolve_scenario(cfg.scenario))
    seed = cfg.seeds[0]
    backend = make_backend(cfg, spec, seed)
    try:
        result, plan, env, judgment = run_episode(spec, seed, backend, cfg.planner_config())
    finally:
        _close(backend)
    audit = {
        "scenario": spec.name,
        "backend": cfg.backend,
        "seed": seed,
        "initial_observations": [a.raw for a in env.initial_observations],
        "plan": plan.to_dict(),
        "trajectory": _trace_dict(env),
        "true_final_state": env.true_state.bits,
        "verdicts": list(judgment.verdicts),
        "recovery_time": result.recovery_time,
        "failed": result.failed,
    }
    lines = [f"Simulation of {spec.name} (seed {seed})", ""]
    for tr, step in zip(env.trace, plan.steps):
        lines.append(f"{tr.step:>2}. [{tr.category}] {tr.before.bits} -> {tr.after.bits}  "
                     f"estimate {step.predicted_state.bits}  {tr.action.action}")
    lines += ["", f"total cost J: {plan.total_cost:g}", f"recovery time: {result.recovery_time:g}",
              f"reached terminal: {'yes' if plan.reached_terminal else 'no'}"]
    if plan.aborted:
        lines.append(f"aborted: {plan.aborted}")
    text = "\n".join(lines) + "\n"
    out = Path(cfg.out)
    _write(out, "simulation.json", _dump(audit))
    _write(out, "simulation.txt", text)
    print(text, end="")
    return 1 if plan.aborted else 0


def _scenario_paths(target: str) -> list[Path]:
    p = Path(target)
    if p.is_dir():
        return sorted(p.glob("*.json"))
    if p.is_file():
        data = json.loads(p.read_text(encoding="utf-8"))
        if isinstance(data, dict) and "scenarios" in data:
            return [(p.parent / s) for s in data["scenarios"]]
        return [p]
    if target == "bundled":
        return bundled_scenarios()
    raise ConfigError(f"corpus not found: {target}")


def _evaluate_states(cfg: RunConfig, path: Path) -> int:
    from irplan.plotting import plot_f1

    corpus = load_state_corpus(path)
    if not corpus.records:
        print(f"error: no usable records in {path}", file=sys.stderr)
        return 1
    backend = None
    if any(r.prediction is None for r in corpus.records):
        if cfg.backend in ("oracle", "noop"):
            raise ConfigError("records without predictions need a scripted, tabular or http backend")
        backend = make_backend(cfg, None, cfg.seeds[0])
    try:
        report, _ = evaluate_states(corpus.records, backend)
    finally:
        if backend is not None:
            _close(backend)
    out = Path(cfg.out)
    data = report.to_dict()
    data["skipped"] = corpus.skipped
    _write(out, "f1.json", _dump(data))
    rows = [f"{'entry':<24} {'F1':>8}"]
    rows += [f"{name:<24} {value:>8.4f}" for name, value in report.per_entry.items()]
    rows += [f"{'caa-F1':<24} {report.caa_f1:>8.4f}", f"{'csa-F1':<24} {report.csa_f1:>8.4f}",
             f"{'exact match':<24} {report.exact_match:>8.4f}",
             f"samples: {report.samples}  skipped: {len(corpus.skipped)}"]
    text = "\n".join(rows) + "\n"
    _write(out, "f1.txt", text)
    plot_f1(report, out / "f1.png")
    print(text, end="")
    return 0


def cmd_evaluate(cfg: RunConfig) -> int:
    """Benchmark a scenario corpus, or score a state-prediction corpus."""
    from irplan.plotting import plot_benchmark

    if not cfg.corpus:
        raise ConfigError("no corpus given")
    p = Path(cfg.corpus)
    if p.is_file():
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        if is_state_corpus(data):
            return _evaluate_states(cfg, p)
    specs, skipped = [], []
    for path in _scenario_paths(cfg.corpus):
        try:
            specs.append(load_scenario(path))
        except (IRPlanError, OSError) as exc:
            log.warning("skipping scenario %s: %s", path, exc)
            skipped.append(f"{path.name}: {exc}")
    if not specs:
        print(f"error: corpus {cfg.corpus} has no usable scenarios", file=sys.stderr)
        return 1
    config = cfg.planner_config()
    # Episodes run in parallel; rollouts inside each stay sequential.
    report = run_benchmark(specs, replace(config, jobs=1), cfg.seeds,
                           lambda spec, seed: make_backend(cfg, spec, seed), jobs=cfg.jobs)
    out = Path(cfg.out)
    data = report.to_dict()
    data["skipped"] = skipped
    _write(out, "benchmark.json", _dump(data))
    _write(out, "benchmark.csv", report.to_csv())
    table = report.table() + (f"skipped: {len(skipped)}\n" if skipped else "")
    _write(out, "benchmark.txt", table)
    plot_benchmark(report, out / "benchmark.png")
    print(table, end="")
    return 0


COMMANDS = {"plan": cmd_plan, "simulate": cmd_simulate, "evaluate": cmd_evaluate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irplan", description="Incident recovery planning with rollouts.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext, target in (
        ("plan", "plan a response from an incident's initial alerts", "scenario file or bundled name"),
        ("simulate", "plan with the scenario environment in the loop", "scenario file or bundled name"),
        ("evaluate", "benchmark a scenario corpus or score a state corpus",
         "directory, scenario list, state corpus, or 'bundled'"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("target", nargs="?", help=target)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--backend", choices=BACKEND_KINDS)
        p.add_argument("--backend-file", help="response table for scripted/tabular backends")
        seeds = p.add_mutually_exclusive_group()
        seeds.add_argument("--seed", type=int)
        seeds.add_argument("--seeds", type=int, nargs="+")
        p.add_argument("--jobs", type=int, help="worker threads (default: CPU count)")
        p.add_argument("--cassette", choices=("record", "replay"))
        p.add_argument("--cassette-path")
        p.add_argument("--out", help="output directory")
        p.add_argument("-N", type=int, help="candidate actions per step")
        p.add_argument("-M", type=int, help="rollouts per candidate")
        p.add_argument("-H", type=int, help="rollout horizon")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (IRPlanError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
