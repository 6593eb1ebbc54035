import pytest
from hypothesis import given
from hypothesis import strategies as st

from irplan.alerts import AlertPair
from irplan.backends import GenerationRequest, ScriptedBackend, TabularBackend, fingerprint
from irplan.calibration import (PairScore, needs_calibration, parse_tactic_label, recalibrate_tactic,
                                screen_tactics, unique_pair_score)
from irplan.domain import Tactic
from irplan.prompts import CALIBRATION, PromptContext, render_prompt

TROJAN, BAD, SCAN = AlertPair("trojan", "1"), AlertPair("bad-traffic", "2"), AlertPair("scan", "3")
CANDIDATES = (Tactic("Initial Access"), Tactic("Execution"), Tactic("Persistence"), Tactic("Impact"))
CTX = PromptContext(system_description="s", logs="l", incident_description="i", tactics=(Tactic("Execution"),),
                    predicted_alerts=frozenset({TROJAN}), observed_alerts=frozenset({SCAN}),
                    candidate_tactics=CANDIDATES)


def test_score_examples():
    s = unique_pair_score(frozenset({TROJAN, BAD}), frozenset({TROJAN, SCAN}))
    assert (s.precision, s.recall, s.overlap) == (0.5, 0.5, 1)
    s = unique_pair_score(frozenset({TROJAN}), frozenset({TROJAN}))
    assert (s.precision, s.recall) == (1.0, 1.0)
    s = unique_pair_score(frozenset(), frozenset({TROJAN}))
    assert (s.precision, s.recall) == (1.0, 0.0)
    s = unique_pair_score(frozenset({TROJAN}), frozenset())
    assert (s.precision, s.recall) == (0.0, 1.0)


@pytest.mark.parametrize("precision,tau,expected", [(0.5, 0.6, True), (0.6, 0.6, False), (1.0, 1.0, False),
                                                    (1.0, 0.0, False), (0.0, 0.0, False)])
def test_gate(precision, tau, expected):
    assert needs_calibration(PairScore(precision, 0, 0, 0, 0), tau) is expected


def test_gate_rejects_bad_threshold():
    with pytest.raises(ValueError):
        needs_calibration(PairScore(1, 1, 0, 0, 0), 1.5)


@pytest.mark.parametrize("text,expected", [
    ("Impact", "Impact"),
    ("<think>the alerts show encryption</think>\nimpact.", "Impact"),
    ('{"tactic": "Execution"}', "Execution"),
    ('{"tactics": ["Persistence", "Impact"]}', "Persistence"),
    ("Revised tactic: Initial Access", "Initial Access"),
    ("Lateral Movement", None),
    ("Impact and Execution", None),
    ("", None),
])
def test_parse_tactic_label(text, expected):
    got = parse_tactic_label(text, CANDIDATES)
    assert (got.label if got else None) == expected


def _calibrator(*answers):
    return ScriptedBackend({fingerprint(render_prompt(CALIBRATION, CTX)): list(answers)})


def test_recalibrate_in_set():
    r = recalibrate_tactic(_calibrator("Impact"), CTX, Tactic("Execution"))
    assert r.tactic == Tactic("Impact") and not r.rejected


def test_recalibrate_out_of_set_falls_back():
    r = recalibrate_tactic(_calibrator("Lateral Movement"), CTX, Tactic("Execution"))
    assert r.tactic == Tactic("Execution") and r.rejected
    assert len(r.responses) == 2


def test_recalibrate_second_attempt():
    r = recalibrate_tactic(_calibrator("Lateral Movement", "Persistence"), CTX, Tactic("Execution"))
    assert r.tactic == Tactic("Persistence") and not r.rejected


def test_echo_incumbent():
    r = recalibrate_tactic(TabularBackend(), CTX, Tactic("Execution"))
    assert r.tactic == Tactic("Execution") and not r.rejected


@given(st.text(max_size=80))
def test_recalibration_never_escapes(answer):
    r = recalibrate_tactic(_calibrator(answer), CTX, Tactic("Execution"))
    assert r.tactic in CANDIDATES


def test_screening_picks_best_and_first_on_tie():
    alerts = {"Initial Access": {"*": frozenset({SCAN})}, "Execution": {"*": frozenset({TROJAN, BAD})},
              "Persistence": {"*": frozenset({TROJAN})}, "Impact": {"*": frozenset({TROJAN})}}
    b = TabularBackend(alerts=alerts)
    ctx = PromptContext(system_description="s", logs="l", incident_description="i", tactics=(Tactic("x"),),
                        techniques=())
    sc = screen_tactics(b, ctx, CANDIDATES, frozenset({TROJAN}))
    assert sc.tactic == Tactic("Persistence")
    assert sc.scores["Execution"].precision == 0.5
    assert sc.passed
    sc = screen_tactics(b, ctx, CANDIDATES, frozenset({AlertPair("other", "9")}))
    assert sc.tactic == Tactic("Initial Access") and not sc.passed
