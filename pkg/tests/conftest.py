import pytest

# (criterion number, title, passed, detail) tuples collected by the acceptance tests
ACCEPTANCE_RESULTS = []


@pytest.fixture()
def criterion():
    """Record and print one pass/fail line, then assert on it."""

    def check(number: int, title: str, passed: bool, detail: str = "") -> None:
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_RESULTS.append((number, line))
        print(line)
        assert passed, line

    return check


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(line)
