import pytest

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = []


@pytest.fixture
def criterion():
    """``record(number, title, error, tolerance)`` logs a PASS/FAIL line.

    It asserts unless ``strict=False``, in which case it returns the outcome.
    """

    def record(number, title, error, tolerance, detail="", strict=True):
        ok = bool(error < tolerance)
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  (error {error:.2e} < {tolerance:.0e}){detail}"
        ACCEPTANCE.append(line)
        print(line)
        assert ok or not strict, line
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
