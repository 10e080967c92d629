from collections import defaultdict

import numpy as np
import pytest

from orthocal.geometry import PROTOTYPE, ParameterSet

_CRITERIA = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, part): acceptance criterion number and sub-part")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    n = marker.args[0]
    part = marker.args[1] if len(marker.args) > 1 else item.name
    _CRITERIA[n].append((part, call.excinfo is None))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        parts = _CRITERIA[n]
        failed = [p for p, ok in parts if not ok]
        status = "PASS" if not failed else "FAIL"
        line = f"criterion {n}: {status} ({len(parts) - len(failed)}/{len(parts)} parts)"
        if failed:
            line += " failing: " + "; ".join(failed)
        terminalreporter.write_line(line)


@pytest.fixture
def config():
    return PROTOTYPE


@pytest.fixture
def nominal():
    return ParameterSet.nominal(PROTOTYPE)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_params(rng, scale=5.0, config=PROTOTYPE):
    return ParameterSet.from_theta(rng.uniform(-scale, scale, 6), config)
