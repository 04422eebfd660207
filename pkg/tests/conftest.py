import pytest

ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the test still asserts on its own."""

    def record(number, title, ok, detail=""):
        ACCEPTANCE.append((number, title, bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(ACCEPTANCE):
        mark = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"{mark}  [{number}] {title}: {detail}")
