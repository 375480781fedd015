import numpy as np
import pytest
from hypothesis import settings

from loopqrng import OpticalParams, SimConfig, simulate_stream

_ACCEPTANCE = pytest.StashKey[list]()

# first calls may load or compile numba kernels
settings.register_profile("loopqrng", deadline=None)
settings.load_profile("loopqrng")

REFERENCE = dict(mu=0.33, r=0.41, eta=0.230)


@pytest.fixture(scope="session")
def ref_params():
    return OpticalParams(**REFERENCE)


@pytest.fixture(scope="session")
def ref_stream_1e7(ref_params):
    """One 10^7-pulse run shared by the statistical tests."""
    return simulate_stream(SimConfig(ref_params, n_pulses=10_000_000, seed=20240601))


@pytest.fixture(scope="session")
def ref_stream_12m(ref_params):
    """1.2e7 pulses, enough for more than 10^6 private bits."""
    return simulate_stream(SimConfig(ref_params, n_pulses=12_000_000, seed=20240602))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record(request):
    """Log one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def _record(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
