import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line(capsys):
    """Record a one-line verdict and echo it even when output is captured."""

    def emit(line: str) -> None:
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
