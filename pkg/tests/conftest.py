import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from commonfix import scenarios
from commonfix.maps import PiecewiseMap
from commonfix.metric import Domain

settings.register_profile(
    "commonfix",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("commonfix")

STEP_A = [
    {"if": "x < 3/8", "then": "11/32"},
    {"if": "3/8 <= x < 1/2", "then": "(1+x)/4"},
    {"if": "x >= 1/2", "then": "(1+x)/2"},
]
STEP_T = [
    {"if": "x < 3/8", "then": "10/32"},
    {"if": "3/8 <= x < 1/2", "then": "3/8"},
    {"if": "x >= 1/2", "then": "1"},
]


@pytest.fixture
def unit():
    return Domain.interval(0.0, 1.0)


@pytest.fixture
def step_domain():
    return Domain.interval(0.0, 1.2)


@pytest.fixture
def step_maps(step_domain):
    return PiecewiseMap.from_spec(STEP_A, step_domain), PiecewiseMap.from_spec(STEP_T, step_domain)


@pytest.fixture
def banach():
    return scenarios.builtin("banach")


@pytest.fixture
def steps():
    return scenarios.builtin("weakly_compatible_steps")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
