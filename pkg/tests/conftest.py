import pytest
from hypothesis import HealthCheck, settings

from tnep_facts import fixtures

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def two_bus():
    return fixtures.two_bus()


@pytest.fixture
def congestion():
    return fixtures.three_bus_congestion()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
