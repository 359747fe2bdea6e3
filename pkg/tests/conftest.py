import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_spd(rng, dim, scale=1.0, floor=1e-3):
    """Random symmetric positive definite matrix with bounded conditioning."""
    m = rng.standard_normal((dim, dim))
    return scale * (m @ m.T + floor * np.eye(dim))


@pytest.fixture
def spd_factory():
    return random_spd
