import pytest

_VERDICTS: dict[tuple[int, str], bool] = {}


@pytest.fixture
def verdict():
    """Record a criterion's outcome and assert it; the terminal summary lists all of them."""

    def record(number: int, ok: bool, detail: str = "") -> None:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'} {detail}".rstrip()
        _VERDICTS[(number, line)] = bool(ok)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_VERDICTS):
        terminalreporter.write_line(line)
