import pytest

acceptance_key = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[acceptance_key] = []


@pytest.fixture
def criterion(request):
    """Record ``(number, ok, detail)`` for the acceptance summary."""

    def record(number: int, ok: bool, detail: str):
        request.config.stash[acceptance_key].append((number, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    rows = sorted(config.stash.get(acceptance_key, []))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in rows:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
