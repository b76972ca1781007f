import pytest

# (criterion, verdict, detail) rows filled in by tests/test_acceptance.py
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{verdict:<4}  {name}: {detail}")


@pytest.fixture
def record():
    def _record(name: str, ok: bool, detail: str = "") -> bool:
        verdict = "PASS" if ok else "FAIL"
        ACCEPTANCE.append((name, verdict, detail))
        print(f"{verdict}  {name}: {detail}")
        return ok
    return _record
