import logging

import pytest
from hypothesis import HealthCheck, settings

from circumnav.config import load_config
from circumnav.report import summarize
from circumnav.simulator import prepare, run

settings.register_profile("default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# step-size advisories are expected for the deliberately coarse grids used in tests
logging.getLogger("circumnav.simulator").setLevel(logging.ERROR)

ACCEPTANCE_LINES: list[str] = []

_RUNS = {}


def bundled_run(name: str):
    """Simulate a bundled scenario once per session: (config, context, log, report)."""
    if name not in _RUNS:
        cfg = load_config(name)
        ctx = prepare(cfg.scenario)
        log = run(cfg.scenario, ctx)
        rep = summarize(log, ctx.graph, cfg.report.window, cfg.report.tolerance)
        _RUNS[name] = (cfg, ctx, log, rep)
    return _RUNS[name]


@pytest.fixture(scope="session")
def hw_run():
    return bundled_run("hw-analog")


@pytest.fixture(scope="session")
def case1_run():
    return bundled_run("case1")


@pytest.fixture(scope="session")
def case2_run():
    return bundled_run("case2")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
