import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from painleve import catalogue

settings.register_profile("painleve", deadline=None, max_examples=40, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("painleve")

ALL = sorted(catalogue.CATALOGUE)
ROBERTSON = [k for k in ALL if catalogue.CATALOGUE[k].robertson]
NOT_ROBERTSON = [k for k in ALL if not catalogue.CATALOGUE[k].robertson]


@functools.lru_cache(maxsize=None)
def spec_named(name):
    # one instance per entry keeps the symbolic caches warm across tests
    return catalogue.get(name)


@pytest.fixture(params=ALL)
def any_spec(request):
    return spec_named(request.param)


@pytest.fixture(params=ROBERTSON)
def robertson_spec(request):
    return spec_named(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
