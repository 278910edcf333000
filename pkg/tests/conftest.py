import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def record(request):
    """Record one part of an acceptance criterion as ``(ok, detail)``.

    ``ok`` is True, False or None (skipped).  The summary prints one line
    per criterion; it fails if any part failed.
    """
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def _record(criterion: int, ok, detail: str):
        store.setdefault(criterion, []).append((ok, detail))
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        print(f"{status} criterion {criterion}: {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(store):
        parts = store[criterion]
        oks = [ok for ok, _ in parts]
        if any(ok is False for ok in oks):
            status = "FAIL"
        elif all(ok is None for ok in oks):
            status = "SKIP"
        else:
            status = "PASS"
        details = "; ".join(detail for _, detail in parts)
        terminalreporter.write_line(f"{status} criterion {criterion}: {details}")
