import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gasmste.plume import Domain, EnvParams, SensorModel

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def env():
    return EnvParams(4.0, -math.pi / 2, 1.2, 5.0)


@pytest.fixture
def domain():
    return Domain(0.0, 50.0, 0.0, 50.0)


@pytest.fixture
def sensor():
    return SensorModel(noise_std=0.1, threshold=0.5, detect_prob=0.95)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_line(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def emit(criterion, ok: bool, detail: str) -> bool:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
