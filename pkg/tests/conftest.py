import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ehmac import FadingConfig, Mode, Multipliers, SystemParams, Weights

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def fig1_tdt():
    return SystemParams.fig1(Mode.TDT)


@pytest.fixture
def fig1_fdt():
    return SystemParams.fig1(Mode.FDT)


@pytest.fixture
def fig1_fading(fig1_tdt):
    return FadingConfig.from_params(fig1_tdt, seed=1)


@pytest.fixture
def half():
    return Weights(np.array([0.5, 0.5]))


@pytest.fixture
def small_mult():
    # user prices around the fig1 operating point, BS price mid-range
    return Multipliers(2e-6, np.array([0.02, 0.02]))


_verdicts = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_verdicts] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion and return the flag."""
    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {label}: {detail}"
        request.config.stash[_verdicts].append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_verdicts, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
