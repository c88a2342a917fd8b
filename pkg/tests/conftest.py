import numpy as np
import pytest

from epvi.mixture import MixtureApprox


def random_mixtures(rng, M, K, d, mean_scale=1.5, var_range=(0.3, 2.0)):
    return [
        MixtureApprox(mean_scale * rng.standard_normal((K, d)), rng.uniform(*var_range, size=K))
        for _ in range(M)
    ]


def central_diff(f, x, h=1e-5):
    """Central differences of a scalar function, one coordinate at a time."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2 * h)
    return out


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
