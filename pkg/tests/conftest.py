import numpy as np
import pytest

from fermiflux.runner import run
from fermiflux.scenario import load_scenario

TRAJECTORY_SCENARIOS = ("fig1", "fig2", "fig3", "fig4", "five_reservoirs")


@pytest.fixture(scope="session")
def bundled_run(tmp_path_factory):
    """Run a bundled scenario once per session and hand out the cached result."""
    cache = {}

    def get(name):
        if name not in cache:
            out = tmp_path_factory.mktemp(name)
            cache[name] = run(load_scenario(name), out, plots=False)
            cache[name].out_dir = out
        return cache[name]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# criterion number -> (passed, detail), filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
