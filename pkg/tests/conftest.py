import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lpnbody import FullState, MassSystem, project

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def random_full_state(rng, n, d, spread=1.0):
    return FullState(spread * rng.normal(size=(n, d)), rng.normal(size=(n, d)))


def random_masses(rng, n):
    return tuple(rng.uniform(0.5, 2.0, size=n))


def random_reduced(rng, sys, d=3):
    """A reduced vector that comes from an actual full state (so it lies on a leaf)."""
    while True:
        s = random_full_state(rng, sys.n, d, spread=1.5)
        y = project(sys, s).vector
        if y[sys.layout.rho].min() > 0.05:
            return s, y


def rel_err(a, b, floor=1e-300):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(params=[2, 3, 4])
def n_small(request):
    return request.param


@pytest.fixture
def three_equal():
    return MassSystem.equal(3)
