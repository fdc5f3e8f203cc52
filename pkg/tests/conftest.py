import pytest

from fpsi.assembly import PhysicalParams
from fpsi.consistency import catalog_reference


@pytest.fixture(scope="session")
def separable_ref():
    return catalog_reference("separable", PhysicalParams(), T=1.0)


@pytest.fixture(scope="session")
def rest_ref():
    return catalog_reference("rest", PhysicalParams(), T=1.0)


ACCEPTANCE_LINES: list = []


@pytest.fixture
def report_line():
    """Record one acceptance PASS/FAIL line; all lines are repeated in the terminal summary."""
    def record(line: str):
        ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
