import pytest

_LINES: dict[str, str] = {}


@pytest.fixture
def record():
    """Store one status line per acceptance criterion for the summary."""

    def _record(key, passed, detail):
        _LINES[key] = f"[{'PASS' if passed else 'FAIL'}] {key}: {detail}"
        print(_LINES[key])
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_LINES, key=lambda k: int(k.split()[1])):
        terminalreporter.write_line(_LINES[key])
