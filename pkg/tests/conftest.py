import pytest

from memsched import CostConfig, build_costs, build_schedule
from memsched.cli import resolve_network

import criteria_log


@pytest.fixture(scope="session")
def alexnet():
    return resolve_network("alexnet")


@pytest.fixture(scope="session")
def costs200(alexnet):
    return build_costs(alexnet, CostConfig(batch=200))


@pytest.fixture(scope="session")
def sched(alexnet):
    return build_schedule(alexnet)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not criteria_log.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in criteria_log.LINES:
        terminalreporter.write_line(line)
