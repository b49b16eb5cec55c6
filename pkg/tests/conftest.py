import numpy as np
import pytest
from hypothesis import settings

from gmocp import DriftProfile, generate_stream, use_backend

settings.register_profile("default", deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_stream():
    drift = DriftProfile(base_quality=(0.8, 0.6, 0.3, 0.1), amplitude=0.1, period=200)
    return generate_stream(length=400, n_labels=6, drift=drift, seed=11)


@pytest.fixture(scope="session")
def default_stream():
    return generate_stream(seed=0)


@pytest.fixture(params=["numba", "numpy"])
def backend(request):
    with use_backend(request.param) as kernels:
        yield kernels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
