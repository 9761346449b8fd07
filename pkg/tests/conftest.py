from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tactoslip.core import TactileFrame  # noqa: E402

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        status = "PASS" if rep.passed else "FAIL"
        previous = _ACCEPTANCE.get(number)
        if previous is None or previous[1] == "PASS":
            _ACCEPTANCE[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_frame(pixels, sensor=1, t=0):
    return TactileFrame(sensor, t, np.asarray(pixels, dtype=np.float64))


def noise_frames(rng, n, shape=(16, 16), sigma=0.01, level=0.5, sensor=1, t0=0):
    h, w = shape
    return [
        make_frame(np.clip(level + sigma * rng.standard_normal((h, w, 3)), 0.0, 1.0), sensor, t0 + k)
        for k in range(n)
    ]
