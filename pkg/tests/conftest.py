import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE: dict[str, dict] = {}


@pytest.fixture
def measured(request):
    """Collects measured values for the acceptance summary line."""
    entry = _ACCEPTANCE.setdefault(request.node.nodeid, {"details": []})
    return entry["details"]


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    entry = _ACCEPTANCE.setdefault(report.nodeid, {"details": []})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["outcome"] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    rows = [(k, v) for k, v in _ACCEPTANCE.items() if "outcome" in v]
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, entry in sorted(rows, key=lambda kv: kv[0]):
        name = nodeid.split("::")[-1].removeprefix("test_")
        detail = "; ".join(entry["details"])
        terminalreporter.write_line(f"{entry['outcome']}  {name}" + (f"  ({detail})" if detail else ""))
