import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from epbtopo.model import SystemConstants

settings.register_profile(
    "default",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def c():
    return SystemConstants()


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)
