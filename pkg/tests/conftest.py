import pytest

# Criterion lines recorded by the acceptance module, echoed in the terminal summary.
ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    def record(number, name, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip()
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
