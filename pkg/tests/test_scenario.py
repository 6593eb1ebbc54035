import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SCENARIOS
from irplan.alerts import parse_snort_alert_line
from irplan.domain import ResponseAction
from irplan.errors import EpisodeFinished, SchemaError, TemplateError
from irplan.rng import substream
from irplan.scenario import (ScenarioEnv, classify_action, emit_alerts, load_scenario, reset,
                             scenario_from_dict, step)
from irplan.state import STAGE_CATEGORIES, RecoveryState

BUNDLED = sorted(SCENARIOS.glob("*.json"))


def test_ctu_fixture(ctu):
    assert ctu.tactic.label == "Impact"
    assert len(ctu.reference_actions) == 6


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_bundled_fixtures_load(path):
    spec = load_scenario(path)
    assert spec.tactic in spec.candidate_tactics
    # every reference action grounds to its stated category
    for a in spec.reference_actions:
        assert classify_action(spec, ResponseAction(a.action)) == a.category


def test_probability_out_of_range(tmp_path, ctu_dict):
    ctu_dict["stage_rules"]["evict"]["success_probability"] = 1.3
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(ctu_dict))
    with pytest.raises(SchemaError) as exc:
        load_scenario(p)
    assert exc.value.path.startswith("stage_rules")


def test_empty_file(tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    with pytest.raises(SchemaError):
        load_scenario(p)


@pytest.mark.parametrize("key", ["name", "stage_rules", "keyword_matchers", "candidate_tactics"])
def test_missing_key(ctu_dict, key):
    del ctu_dict[key]
    with pytest.raises(SchemaError) as exc:
        scenario_from_dict(ctu_dict)
    assert exc.value.path == key


def test_bad_template(ctu_dict):
    ctu_dict["alert_table"]["Impact"]["0"] = ["this is not an alert"]
    with pytest.raises(TemplateError):
        scenario_from_dict(ctu_dict)


def test_reset_deterministic(ctu):
    a = reset(ctu, 42)
    b = reset(ctu, 42)
    assert a == b
    assert a[0].true_state == RecoveryState.initial()


def test_empty_row_no_observations(make_spec):
    spec = make_spec(alert_table={"Impact": {"0": []}}, false_alarm_rate=0.0)
    assert reset(spec, 1)[1] == []


def test_impact_zero_progress_has_trojan(ctu):
    alerts = emit_alerts(ctu, "Impact", 0, substream(0, "x"))
    assert any(a.priority == 1 and "Trojan" in a.message for a in alerts)


def test_false_alarm_rate_one(make_spec):
    spec = make_spec(false_alarm_rate=1.0)
    for i in range(20):
        alerts = emit_alerts(spec, "Impact", 6, substream(i, "x"))
        assert [a.classification for a in alerts] == ["Not Suspicious Traffic"]


def test_false_alarm_rate_zero_empty_row(make_spec):
    spec = make_spec(false_alarm_rate=0.0)
    assert emit_alerts(spec, "Impact", 6, substream(0, "x")) == []


@pytest.mark.parametrize("text,category", [
    ("Disconnect the Ethernet cable of the infected server at 147.32.84.165 to sever its network "
     "connection. Concurrently, configure a rule on the main switch/firewall to block all outbound traffic "
     "to the C2 server 222.88.205.195.", "contain"),
    ("Wipe the hard drive of 147.32.84.165", "evict"),
    ("ponder the situation", "noop"),
])
def test_classify(ctu, text, category):
    assert classify_action(ctu, ResponseAction(text)) == category


def test_explicit_category_wins(ctu):
    assert classify_action(ctu, ResponseAction("ponder", category="harden")) == "harden"


def _act(category):
    return ResponseAction(f"x {category}", category=category)


def test_contain_from_start(ctu):
    env, _ = reset(ctu, 0)
    nxt, _, done, cost, cat = step(env, ctu, _act("contain"))
    assert nxt.true_state == RecoveryState.from_bits("100000")
    assert (done, cost, cat) == (False, 1, "contain")


def test_unmet_prerequisite(ctu):
    env, _ = reset(ctu, 0)
    nxt, *_ = step(env, ctu, _act("evict"))
    assert nxt.true_state == RecoveryState.initial()


def test_restore_finishes(ctu):
    env, _ = reset(ctu, 0)
    env = env.__class__(RecoveryState.from_bits("111110"), 5.0, 0, 5)
    nxt, _, done, *_ = step(env, ctu, _act("restore"))
    assert done and nxt.true_state == RecoveryState.terminal()
    with pytest.raises(EpisodeFinished):
        step(nxt, ctu, _act("restore"))


def test_canonical_sequence_costs_six(ctu):
    env = ScenarioEnv(ctu, 3)
    for c in STAGE_CATEGORIES:
        env.step(_act(c))
    assert env.done and env.state.elapsed_cost == 6
    assert all(t.flipped for t in env.trace)


def test_composite_rule(ctu_dict):
    ctu_dict["stage_rules"]["contain"]["also_sets"] = ["assess"]
    spec = scenario_from_dict(ctu_dict)
    env = ScenarioEnv(spec, 0)
    env.step(_act("contain"))
    assert env.true_state == RecoveryState.from_bits("110000")


@pytest.mark.parametrize("path", BUNDLED, ids=lambda p: p.stem)
def test_emitted_lines_reparse(path):
    spec = load_scenario(path)
    for seed in range(10):
        env = ScenarioEnv(spec, seed)
        lines = [a.raw for a in env.initial_observations]
        for c in STAGE_CATEGORIES * 2:
            if env.done:
                break
            obs, *_ = env.step(_act(c))
            lines += [a.raw for a in obs]
        for line in lines:
            assert parse_snort_alert_line(line).raw == line


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.lists(st.sampled_from(STAGE_CATEGORIES + ("noop",)), max_size=25))
def test_true_state_monotone(seed, cats):
    spec = load_scenario(SCENARIOS / "ait-ids-v2-2022-multistage.json")
    env = ScenarioEnv(spec, seed)
    for c in cats:
        if env.done:
            break
        before = env.true_state
        env.step(_act(c))
        assert env.true_state.covers(before)
        assert env.true_state.progress - before.progress <= 1


def test_alert_stream_independent_of_transitions(ctu_dict):
    """Adding alert templates must not change which transitions succeed."""
    ctu_dict["stage_rules"]["contain"]["success_probability"] = 0.5
    a = scenario_from_dict(ctu_dict)
    ctu_dict["alert_table"]["Impact"]["0"] = ctu_dict["alert_table"]["Impact"]["0"] * 3
    b = scenario_from_dict(ctu_dict)
    for seed in range(30):
        ea, eb = ScenarioEnv(a, seed), ScenarioEnv(b, seed)
        for _ in range(4):
            ea.step(_act("contain"))
            eb.step(_act("contain"))
        assert [t.after for t in ea.trace] == [t.after for t in eb.trace]
