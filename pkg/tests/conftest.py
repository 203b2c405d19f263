import sys
from collections import defaultdict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> title, outcomes and notes gathered during the run
_CRITERIA: dict[int, dict] = defaultdict(lambda: {"title": "", "outcomes": [], "notes": []})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by a test")


def _criterion(item):
    mark = item.get_closest_marker("criterion")
    return None if mark is None else mark.args


def pytest_collection_modifyitems(items):
    for item in items:
        args = _criterion(item)
        if args:
            _CRITERIA[args[0]]["title"] = args[1]


@pytest.fixture
def note(request):
    """Attach a measured value to this test's criterion line in the summary."""
    args = _criterion(request.node)
    return lambda text: _CRITERIA[args[0]]["notes"].append(text)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    args = _criterion(item)
    if args and (rep.when == "call" or rep.failed or rep.skipped):
        if hasattr(rep, "wasxfail") and not rep.passed:
            result = "xfail"
        else:
            result = "pass" if rep.passed and rep.when == "call" else "fail"
        _CRITERIA[args[0]]["outcomes"].append(result)


def pytest_terminal_summary(terminalreporter):
    if not any(c["outcomes"] for c in _CRITERIA.values()):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        c = _CRITERIA[n]
        outcomes = c["outcomes"]
        if not outcomes:
            state = "NOT RUN"
        else:
            state = "PASS" if all(o == "pass" for o in outcomes) else "FAIL"
        known = outcomes.count("xfail")
        if known:
            state += f" [{known} of {len(outcomes)} checks are known failures]"
        detail = f" ({' | '.join(c['notes'])})" if c["notes"] else ""
        terminalreporter.write_line(f"criterion {n} {state}: {c['title']}{detail}")
