import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ncdoa import ArrayGeometry, benchmark_array

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# Directions and array used throughout the benchmark scenarios.
BENCH_DOAS_DEG = (-11.4, -1.1)


@pytest.fixture(scope="session")
def bench():
    return benchmark_array()


@pytest.fixture(scope="session")
def bench_theta():
    return np.deg2rad(BENCH_DOAS_DEG)


@pytest.fixture(scope="session")
def small_array():
    """Three two-sensor subarrays with spacings 1, 2, 3."""
    return ArrayGeometry.from_offsets([[[0, 0], [d, 0]] for d in (1, 2, 3)],
                                      [[0, 0], [4.3, 1.0], [-2.2, 3.1]])


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.abs(a - b).max() / max(np.abs(b).max(), 1e-300)
