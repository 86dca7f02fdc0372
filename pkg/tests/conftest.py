import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20250810)


@pytest.fixture
def dist_pairs(rng):
    """Random strictly-positive distribution pairs over mixed support sizes."""
    pairs = []
    for _ in range(200):
        d = int(rng.integers(2, 33))
        pairs.append((rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))))
    return pairs
