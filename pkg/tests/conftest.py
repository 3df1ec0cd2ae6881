import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fsrsa import benchmarks

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def nonlinear():
    return benchmarks.nonlinear_test_function()


@pytest.fixture(scope="session")
def short_column():
    return benchmarks.short_column()


@pytest.fixture(scope="session")
def load_problem():
    return benchmarks.load_model_abh()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
