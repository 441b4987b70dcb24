import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; it is echoed live and again in the terminal summary."""
    def record(tag, ok, detail, capsys=None):
        line = f"{'PASS' if ok else 'FAIL'}  {tag}: {detail}"
        _LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
