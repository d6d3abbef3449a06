import numpy as np
import pytest

from denoiselab import DataMatrix, Denoiser, empirical_stats


class FnDenoiser(Denoiser):
    """Wrap a plain function as a denoiser for tests."""

    def __init__(self, dim, fn):
        self.dim = dim
        self._fn = fn

    def evaluate_batch(self, X, sigma):
        X = np.asarray(X, dtype=np.float64)
        return np.stack([np.asarray(self._fn(row, sigma), dtype=np.float64) for row in X])


@pytest.fixture
def two_point_data():
    return DataMatrix(np.array([[1.0, 0.0], [-1.0, 0.0]]))


@pytest.fixture
def two_point_stats(two_point_data):
    return empirical_stats(two_point_data)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def write_csv(path, rows):
    with open(path, "w") as fh:
        for row in np.atleast_2d(rows):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path
