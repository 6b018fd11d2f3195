import numpy as np
import pytest

from rpspatial.covariance import MaternParams, build_corr_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(20240809)


@pytest.fixture
def unit_square_locations(rng):
    return rng.random((100, 2))


@pytest.fixture
def matern_matrix(unit_square_locations):
    return build_corr_matrix(unit_square_locations, MaternParams(1.0, 0.2, 0.5)).entries
