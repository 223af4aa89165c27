import pytest

_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """``verdict(n, ok, detail)`` records one acceptance line and echoes it live."""
    def record(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES.append((n, line))
        print("\n" + line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_LINES):
        terminalreporter.write_line(line)
