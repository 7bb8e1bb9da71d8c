import os
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from microgrid_dro import build_ieee37_case  # noqa: E402

from cases import four_node  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def ieee_case():
    return build_ieee37_case()


@pytest.fixture
def four():
    return four_node()


# acceptance bookkeeping: tests marked ``criterion(n, title)`` roll up into one line per criterion

ACCEPTANCE: dict = {}


def _entry(item):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return None
    n, title = mark.args
    return ACCEPTANCE.setdefault(n, {"title": title, "failed": False, "ran": False, "seconds": 0.0, "notes": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    entry = _entry(item)
    if entry is None:
        return
    entry["seconds"] += rep.duration
    entry["failed"] |= rep.failed
    entry["ran"] |= rep.when == "call" and not rep.skipped


@pytest.fixture
def note(request):
    """Attach a line of reported figures to the test's acceptance criterion."""
    entry = _entry(request.node)
    return entry["notes"].append if entry is not None else (lambda line: None)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        e = ACCEPTANCE[n]
        verdict = "FAIL" if e["failed"] else ("PASS" if e["ran"] else "SKIP")
        terminalreporter.write_line(f"criterion {n} ({e['title']}): {verdict}  [{e['seconds']:.1f}s]")
        for line in e["notes"]:
            terminalreporter.write_line(f"    {line}")
