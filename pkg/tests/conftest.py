import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


def random_invertible(rng, d, cond_cap=50.0):
    """Gaussian matrix rejected until comfortably invertible."""
    while True:
        a = rng.standard_normal((d, d))
        if np.linalg.cond(a) < cond_cap:
            return a
