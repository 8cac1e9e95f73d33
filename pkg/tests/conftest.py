import pytest
from hypothesis import settings

from fgscatter import standard

# fixed example generation keeps runs reproducible
settings.register_profile("repro", derandomize=True, database=None)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def t4_jet():
    return standard.jet_of("t4")


@pytest.fixture(scope="session")
def t4_rescaled_jet():
    return standard.jet_of("t4_rescaled")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
