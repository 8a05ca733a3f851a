import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the end-of-run summary and return the flag."""

    def record(cid, name, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {cid:2d}: {name} | {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
