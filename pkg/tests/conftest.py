import sys

import pytest

from safevi.environments import CliffworldParams, build_cliffworld, build_counter_mdp, counter_policy


@pytest.fixture(scope="session")
def counter():
    return build_counter_mdp()


@pytest.fixture(scope="session")
def cliff():
    return build_cliffworld(CliffworldParams())


@pytest.fixture(scope="session")
def pi_l(counter):
    return counter_policy(counter, "L")


@pytest.fixture(scope="session")
def pi_r(counter):
    return counter_policy(counter, "R")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line)
