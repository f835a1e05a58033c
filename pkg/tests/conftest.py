import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion and return the verdict."""

    def record(number, title, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {number:>2}. {title}" + (f": {detail}" if detail else "")
        request.config.stash[_LINES].append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
