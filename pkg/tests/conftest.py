import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fiberfo.mesh import generate_interval, generate_lv_ellipsoid, generate_unit_square

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture(scope="session")
def square8():
    return generate_unit_square(8)


@pytest.fixture(scope="session")
def interval10():
    return generate_interval(10)


@pytest.fixture(scope="session")
def lv_coarse():
    return generate_lv_ellipsoid(target_h=4.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
