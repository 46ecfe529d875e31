import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def params():
    from chargenoise.core import preset

    return preset("qubitA")


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def static_env(charge_e=0.0, parity=1, n=400, dt=0.1, flux=0.0):
    from chargenoise.noise import EnvironmentTrace

    return EnvironmentTrace(
        dt, np.full(n, float(charge_e)), np.full(n, parity, dtype=np.int8), np.full(n, float(flux)), 0, 0.0
    )


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Register one acceptance verdict for the terminal summary."""
    ACCEPTANCE_LINES.append((number, f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
