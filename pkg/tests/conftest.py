import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one summary line per acceptance criterion."""

    def log(line: str):
        print(line)
        _ACCEPTANCE_LINES.append(line)

    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
