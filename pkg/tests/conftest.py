import numpy as np
import pytest


def random_pd(rng, d, scale=1.0, extra=2):
    """Gram matrix of random points plus a small ridge: well-conditioned PD."""
    X = rng.normal(size=(d, d + extra))
    return scale * (X @ X.T / (d + extra)) + 0.1 * np.eye(d)


def random_orthonormal(rng, d):
    Q, R = np.linalg.qr(rng.normal(size=(d, d)))
    return Q * np.sign(np.diag(R))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
