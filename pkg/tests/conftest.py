import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from telgraph.engine import Engine, EngineConfig  # noqa: E402

FAST = EngineConfig(wal=False, group_interval=0.0)


@pytest.fixture
def engine():
    eng = Engine(config=FAST)
    yield eng
    eng.close()


@pytest.fixture
def make_engine():
    """Factory for engines that are closed at teardown."""
    made = []

    def make(directory=None, **overrides):
        cfg = FAST.with_(**overrides) if directory is None else EngineConfig(
            group_interval=0.0, **overrides)
        eng = Engine(directory, config=cfg)
        made.append(eng)
        return eng

    yield make
    for eng in made:
        eng.close()


# one summary line per acceptance criterion, whatever the capture mode
_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        name = report.nodeid.split("::test_criterion_", 1)[1]
        number, _, title = name.partition("_")
        detail = "; ".join(f"{k}={v}" for k, v in report.user_properties)
        _CRITERIA[int(number)] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}  {detail}")
