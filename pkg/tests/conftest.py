import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tricolor.lattice import LatticeSpec, build_lattice

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def g66():
    return build_lattice(LatticeSpec(6, 6))


@pytest.fixture(scope="session")
def g32():
    return build_lattice(LatticeSpec(3, 2))


@pytest.fixture(scope="session")
def g31():
    return build_lattice(LatticeSpec(3, 1, degenerate_ok=True))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
