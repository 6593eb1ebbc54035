import json

import pytest

from irplan.alerts import AlertPair, parse_snort_alert_line
from irplan.domain import CostModel, HistoryLog, ResponseAction, Tactic


def test_action_render_is_json():
    a = ResponseAction("Isolate host", "Stops spread", "contain")
    assert json.loads(a.render()) == {"Action": "Isolate host", "Explanation": "Stops spread"}
    assert ResponseAction.from_dict(a.to_dict()) == a


@pytest.mark.parametrize("kwargs", [{"action": ""}, {"action": "   "}, {"action": "x", "category": "dance"}])
def test_action_validation(kwargs):
    with pytest.raises(ValueError):
        ResponseAction(**kwargs)


def test_tactic_match():
    assert Tactic("Impact").matches("  impact ")
    assert not Tactic("Impact").matches("Initial Access")


def test_cost_model_defaults_and_validation():
    c = CostModel()
    assert (c.unit_cost, c.penalty_cost, c.failure_cost) == (1, 1, 20)
    with pytest.raises(ValueError):
        CostModel(unit_cost=5, failure_cost=2)
    with pytest.raises(ValueError):
        CostModel(penalty_cost=-1)


def test_history_log_text():
    h = HistoryLog(Tactic("Impact"))
    line = "[1:1:1] x [Classification: Misc Attack] [Priority: 2]"
    h.append([parse_snort_alert_line(line)])
    h.append([AlertPair("scan", "3")], ResponseAction("Block the port"))
    assert h.log_text() == line + "\n[Classification: scan] [Priority: 3]"
    assert [a.action for a in h.actions] == ["Block the port"]
