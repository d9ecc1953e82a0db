import pytest

# filled by test_acceptance.py: criterion number -> (passed, name, detail)
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


@pytest.fixture
def report():
    def _report(num: int, name: str, ok: bool, detail: str = ""):
        ACCEPTANCE[num] = (ok, name, detail)
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {num} {name}: {detail}")
    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, name, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num}. {name}: {detail}")
