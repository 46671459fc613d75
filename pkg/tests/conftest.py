import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def acceptance():
    """Record one acceptance verdict; the lines are printed in the terminal summary."""
    def report(number: int, ok: bool, detail: str):
        _RESULTS[number] = (bool(ok), detail)
        print(f"CRITERION {number:2d} {'PASS' if ok else 'FAIL'}: {detail}")
    return report


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        ok, detail = _RESULTS[number]
        terminalreporter.write_line(f"CRITERION {number:2d} {'PASS' if ok else 'FAIL'}: {detail}")
