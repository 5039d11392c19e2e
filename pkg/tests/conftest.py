import pytest

from reasonlab.cfg import build_cfg
from reasonlab.corpus import MIN_SUB_ARRAY_SUM, SPECIAL_FILTER
from reasonlab.lang.parser import parse

FILTER_INPUT = [[71, -2, -33, 75, 21, 19]]
# if/while decisions made on that input before the -33 check: 71 (outer, inner), -2, then -33.
MINUS_33_DECISION = 4


@pytest.fixture
def special_filter():
    unit = parse(SPECIAL_FILTER.source)
    return SPECIAL_FILTER, unit, build_cfg(unit, SPECIAL_FILTER.entry)


@pytest.fixture
def min_sub_array():
    unit = parse(MIN_SUB_ARRAY_SUM.source)
    return MIN_SUB_ARRAY_SUM, unit, build_cfg(unit, MIN_SUB_ARRAY_SUM.entry)


# -- acceptance reporting ----------------------------------------------------------

import time  # noqa: E402

SUITE_LIMIT = 120.0
_criteria: list[tuple[str, bool, float, float, str]] = []
_clock: dict[str, float] = {}


def record_criterion(name, ok, elapsed, limit, detail=""):
    _criteria.append((name, ok, elapsed, limit, detail))


def pytest_sessionstart(session):
    _clock["start"] = time.perf_counter()


def pytest_sessionfinish(session, exitstatus):
    if not _criteria:
        return
    elapsed = time.perf_counter() - _clock.get("start", time.perf_counter())
    ok = elapsed <= SUITE_LIMIT
    _criteria.append(("offline suite duration (this session)", ok, elapsed, SUITE_LIMIT, f"{session.testscollected} tests"))
    if not ok and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name, ok, elapsed, limit, detail in _criteria:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  [{elapsed:.2f}s / {limit:.0f}s]  {detail}")
