import pytest

_RESULTS: list[tuple[int, str, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line: criterion(number, passed, detail)."""
    def record(number: int, passed: bool | None, detail: str) -> None:
        status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
        _RESULTS.append((number, status, detail))
        print(f"criterion {number}: {status} - {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail in sorted(_RESULTS):
        terminalreporter.write_line(f"criterion {number:>2}: {status} - {detail}")
