import pytest

_LINES = []


@pytest.fixture
def report():
    """Record one ``criterion N: PASS|FAIL`` line, shown in the terminal summary."""

    def record(num: int, ok: bool, detail: str):
        line = f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES.append((num, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES, key=lambda x: x[0]):
            terminalreporter.write_line(line)
