import pytest

# criterion number -> list of (part, ok, detail); filled by test_acceptance.py
_ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def acceptance():
    def record(criterion: int, part: str, ok: bool, detail: str):
        _ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[n]
        ok = all(p[1] for p in parts)
        detail = "; ".join(f"{name}: {'ok' if good else 'NOT MET'} ({d})" for name, good, d in parts)
        tr.write_line(f"CRITERION {n:2d} {'PASS' if ok else 'FAIL'}  {detail}")
