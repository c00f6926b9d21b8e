import sys
import warnings

import numpy as np
import pytest
from hypothesis import settings

from shearthin.continuation import EpsNotStabilized
from shearthin.discretization import build_space
from shearthin.geometry import ThinDomain, build_thin_mesh

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture(autouse=True)
def _quiet_eps_warning():
    # the eps schedule is expected to leave a visible gap; tests that care assert on it
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EpsNotStabilized)
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def unit_space():
    return build_space(build_thin_mesh(ThinDomain.constant(1.0, 1.0), 1, 1))


@pytest.fixture(scope="session")
def film():
    return ThinDomain.constant(L=1.0, h0=0.5)


@pytest.fixture(scope="session")
def film_space(film):
    return build_space(build_thin_mesh(film, 4, 2))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
