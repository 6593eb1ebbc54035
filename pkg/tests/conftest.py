import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from irplan.scenario import load_scenario, scenario_from_dict  # noqa: E402

DATA = Path(__file__).resolve().parents[1] / "src" / "irplan" / "data"
SCENARIOS = DATA / "scenarios"
CORPORA = DATA / "corpora"
FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def ctu():
    return load_scenario(SCENARIOS / "ctu-cryptodefense.json")


@pytest.fixture
def ctu_dict():
    return json.loads((SCENARIOS / "ctu-cryptodefense.json").read_text())


@pytest.fixture
def make_spec(ctu_dict):
    """Build a ScenarioSpec from the CTU fixture with selected keys replaced."""
    def build(**overrides):
        data = json.loads(json.dumps(ctu_dict))
        data.update(overrides)
        return scenario_from_dict(data)
    return build
