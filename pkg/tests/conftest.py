import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record a one-line PASS/FAIL verdict, echoed in the terminal summary."""
    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
