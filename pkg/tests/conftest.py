import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, title, ok, detail)``."""
    def record(n, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {n:>2}. {title}: {detail}"
        _ACCEPTANCE.append((n, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
