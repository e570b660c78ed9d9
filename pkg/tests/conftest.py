import re
from pathlib import Path

import pytest

from trua.trace_model import PilotRecord, TerminationClass, TraceDataset

FIXTURES = Path(__file__).parent / "fixtures"

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_results: dict[int, tuple[str, str]] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def make_dataset(rows, retire_time=136800, kill_time=144000) -> TraceDataset:
    """rows: (pilot_id, start, end[, class])"""
    records = []
    for row in rows:
        pid, start, end = row[:3]
        cls = row[3] if len(row) > 3 else TerminationClass.PREEMPTED
        records.append(PilotRecord(pid, "siteA", start, end, TerminationClass(cls)))
    return TraceDataset.from_records(records, retire_time=retire_time, kill_time=kill_time)


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results[n] = (m.group(2), "PASS" if report.outcome == "passed" else "FAIL")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        name, verdict = _results[n]
        terminalreporter.write_line(f"criterion {n:2d} {verdict}  {name}")
