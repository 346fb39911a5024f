import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mvforest.simgen import ResponseModel, SimulationSetting, generate  # noqa: E402
from mvforest.simgen import CovarianceSpec, FeatureDependence  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def linear1_small():
    """n=30 Linear 1 dataset, independent features, rho=0."""
    setting = SimulationSetting(ResponseModel.LINEAR1, FeatureDependence.INDEPENDENT,
                                CovarianceSpec(0.0, 1), 30)
    return generate(setting, seed=7)


# ---------------------------------------------------------------- acceptance report

_CRITERIA = {}


def _entry(marker):
    number, title = marker.args
    return _CRITERIA.setdefault(number, {"title": title, "ok": True, "notes": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        entry = _entry(marker)
        entry["ok"] = entry["ok"] and report.passed


@pytest.fixture
def note(request):
    """Attach a measured value to the criterion's summary line."""
    marker = request.node.get_closest_marker("criterion")

    def add(text):
        _entry(marker)["notes"].append(str(text))
        print(text)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "PASS" if entry["ok"] else "FAIL"
        terminalreporter.write_line(f"{status} criterion {number}: {entry['title']}")
        for text in entry["notes"]:
            terminalreporter.write_line(f"    {text}")
