import random

import pytest

from cachelab.config import CacheGeometry, HierarchyConfig
from cachelab.engine import AccessKind, TraceRecord


def tiny_config(cores=2, l1_sets=2, l1_ways=2, l2_sets=4, l2_ways=2, block=64, clock_hz=1_000_000_000):
    """Hierarchy built straight from set/way counts."""
    l1 = CacheGeometry(l1_sets * l1_ways * block, l1_ways, block)
    l2 = CacheGeometry(l2_sets * l2_ways * block, l2_ways, block)
    return HierarchyConfig(core_count=cores, l1i=l1, l1d=l1, l2=l2, clock_hz=clock_hz)


def random_trace(rng, length, cores, universe, block=64, kinds="rwi"):
    return [
        TraceRecord(rng.randrange(cores), AccessKind(rng.choice(kinds)), rng.randrange(universe) * block)
        for _ in range(length)
    ]


@pytest.fixture
def rng():
    return random.Random(1234)


_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: package exit criteria")


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE[report.nodeid] = (report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (outcome, duration) in sorted(
        _ACCEPTANCE.items(), key=lambda kv: int(kv[0].split("test_criterion_")[1].split("_")[0])
    ):
        number, _, name = nodeid.split("::")[-1][len("test_criterion_"):].partition("_")
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {number}: {name.replace('_', ' ')}  ({duration:.2f}s)")
