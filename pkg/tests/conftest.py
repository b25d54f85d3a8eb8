import pytest

_RESULTS = {}


class AcceptanceLog:
    def record(self, number, title, passed, detail=""):
        _RESULTS[number] = (title, bool(passed), detail)
        return passed


@pytest.fixture
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, passed, detail = _RESULTS[number]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:2d}. {title}: {detail}")
