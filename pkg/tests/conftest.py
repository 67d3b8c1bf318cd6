import pytest

CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[CRITERIA] = []


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[CRITERIA].append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
