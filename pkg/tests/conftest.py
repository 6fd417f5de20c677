import pytest

from gridattacksim.attacks import default_schedule
from gridattacksim.caseio import builtin_case14, fixture_text, parse_matpower_case
from gridattacksim.simulator import SimConfig, run


@pytest.fixture(scope="session")
def case14():
    return builtin_case14()


@pytest.fixture(scope="session")
def case2():
    return parse_matpower_case(fixture_text("case2"))


@pytest.fixture(scope="session")
def case3():
    return parse_matpower_case(fixture_text("case3"))


@pytest.fixture(scope="session")
def attacked_log(case14):
    return run(case14, SimConfig(schedule=default_schedule()))


@pytest.fixture(scope="session")
def baseline_log(case14):
    return run(case14, SimConfig())
