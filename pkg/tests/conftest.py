import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from wulffflow import GammaSpec, build_anisotropy, make_grid

settings.register_profile(
    "default", max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

TRIG_TERMS = [{"m": 3, "a": 0.05, "b": 0.0}]


@pytest.fixture(scope="session")
def grid512():
    return make_grid(1, 512)


@pytest.fixture(scope="session")
def iso512(grid512):
    return build_anisotropy(GammaSpec.constant(1.0), grid512)


@pytest.fixture(scope="session")
def trig512(grid512):
    return build_anisotropy(GammaSpec.trig(1.0, TRIG_TERMS), grid512)


@pytest.fixture(scope="session")
def ellgamma512(grid512):
    # support function of the ellipse with semi-axes (2, 1)
    return build_anisotropy(GammaSpec.ellipse((2.0, 1.0)), grid512)


@pytest.fixture(scope="session")
def grid2():
    return make_grid(2, (24, 48))


@pytest.fixture(scope="session")
def iso2(grid2):
    return build_anisotropy(GammaSpec.constant(1.0, n=2), grid2)


@pytest.fixture(scope="session")
def ell2(grid2):
    return build_anisotropy(GammaSpec.ellipse((1.2, 1.0, 0.9)), grid2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    lines = [RESULTS[k] for k in sorted(k for k in RESULTS if isinstance(k, int))]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
