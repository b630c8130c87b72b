import numpy as np
import pytest

from needlets.filter_bank import build_profile
from needlets.random_field import power_law_spectrum


@pytest.fixture(scope="session")
def profile2():
    return build_profile(2.0)


@pytest.fixture(scope="session")
def spec3():
    # alpha = 3 power law, long enough for every scale up to j = 6 at B = 2
    return power_law_spectrum(3.0, 1.0, 160)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_points(rng, n):
    """Uniform points on the sphere as (theta, phi) arrays."""
    theta = np.arccos(rng.uniform(-1.0, 1.0, n))
    phi = rng.uniform(0.0, 2 * np.pi, n)
    return theta, phi
