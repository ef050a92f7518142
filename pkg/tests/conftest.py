import numpy as np
import pytest

from rqmcompress import cyclicwalk


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def walk_model(n: int, sigma: float):
    """Cyclic-walk model of 2**n sites with a wrapped-Gaussian shift."""
    masses = cyclicwalk.discretize_shift(cyclicwalk.WrappedGaussian(0.0, sigma), 2**n)
    return cyclicwalk.build_model(cyclicwalk.transition_matrix(masses))
