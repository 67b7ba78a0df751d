import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def short_night():
    """A 2-hour synthetic session (240 epochs) shared by slower tests."""
    from radar_somnia.synthgen import SynthConfig, generate_hypnogram, synth_session

    cfg = SynthConfig(seed=3)
    hyp = generate_hypnogram(cfg, seed=11, n_epochs=240, start_clock=23 * 3600.0)
    return synth_session(hyp, cfg, seed=5, session_id="N1")


# -- acceptance verdicts ---------------------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    rep = outcome.get_result()
    n = marker.args[0]
    if rep.when == "call" or rep.failed:
        prev = _CRITERIA.get(n, "PASS")
        _CRITERIA[n] = "FAIL" if rep.failed or prev == "FAIL" else "PASS"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {n:2d}: {_CRITERIA[n]}")
