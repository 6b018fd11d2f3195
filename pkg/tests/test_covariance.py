import numpy as np
import pytest
from scipy.linalg import cholesky

from rpspatial.covariance import (
    ArealGraph,
    IcarPrecision,
    MaternParams,
    build_corr_matrix,
    generalized_inverse,
    icar_precision,
    matern_corr,
)
from rpspatial.simulate import lattice_graph


class TestMaternCorr:
    def test_zero_distance_is_one(self):
        assert matern_corr(0.0, 0.2, 2.5) == 1.0
        assert matern_corr(0.0, 1.3, 0.7) == 1.0

    def test_exponential_closed_form_at_half(self):
        h = np.linspace(0.0, 0.6, 50)
        np.testing.assert_allclose(matern_corr(h, 0.2, 0.5), np.exp(-h / 0.2), atol=1e-10)

    def test_bessel_route_matches_exponential(self):
        # generic-nu evaluation near 1/2 agrees with the closed form
        h = np.linspace(0.01, 0.6, 40)
        bessel = matern_corr(h, 0.2, 0.5 + 1e-9)
        np.testing.assert_allclose(bessel, np.exp(-h / 0.2), atol=1e-6)

    def test_nu_2p5_closed_form(self):
        h = np.linspace(0.0, 0.8, 100)
        phi = 0.2
        a = np.sqrt(5.0) * h / phi
        expected = (1.0 + a + a**2 / 3.0) * np.exp(-a)
        np.testing.assert_allclose(matern_corr(h, phi, 2.5), expected, atol=1e-10)

    def test_bessel_route_matches_nu_2p5(self):
        h = np.linspace(0.01, 0.8, 40)
        phi, a = 0.2, np.sqrt(5.0) * np.linspace(0.01, 0.8, 40) / 0.2
        expected = (1.0 + a + a**2 / 3.0) * np.exp(-a)
        np.testing.assert_allclose(matern_corr(h, phi, 2.5 + 1e-9), expected, atol=1e-6)

    def test_monotone_nonincreasing(self):
        for nu in (0.5, 1.2, 2.5):
            vals = matern_corr(np.linspace(0, 2, 200), 0.3, nu)
            assert np.all(np.diff(vals) <= 1e-15)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            matern_corr(0.1, -0.2, 0.5)
        with pytest.raises(ValueError):
            matern_corr(0.1, 0.2, 0.0)
        with pytest.raises(ValueError):
            matern_corr(-0.1, 0.2, 0.5)


class TestBuildCorrMatrix:
    def test_two_points_exponential(self):
        locs = np.array([[0.0, 0.0], [0.3, 0.4]])  # distance 0.5
        corr = build_corr_matrix(locs, MaternParams(1.0, 0.2, 0.5))
        assert corr.entries[0, 1] == pytest.approx(np.exp(-0.5 / 0.2), abs=1e-12)
        np.testing.assert_array_equal(np.diag(corr.entries), 1.0)

    def test_duplicate_locations_flagged(self):
        locs = np.array([[0.1, 0.1], [0.1, 0.1], [0.5, 0.5]])
        with pytest.warns(RuntimeWarning, match="near singular"):
            corr = build_corr_matrix(locs, MaternParams(1.0, 0.2, 0.5))
        assert corr.entries[0, 1] == pytest.approx(1.0)

    def test_collinear_product_property(self):
        # exponential kernel on a line: R13 = R12 * R23
        locs = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0]])
        r = build_corr_matrix(locs, MaternParams(1.0, 0.2, 0.5)).entries
        assert r[0, 2] == pytest.approx(r[0, 1] * r[1, 2], abs=1e-12)

    def test_symmetry_and_range(self, rng):
        locs = rng.random((60, 2))
        r = build_corr_matrix(locs, MaternParams(1.0, 0.25, 1.5)).entries
        np.testing.assert_allclose(r, r.T)
        assert np.all(r <= 1.0) and np.all(r >= -1.0)

    def test_cholesky_with_jitter_succeeds_n1000(self):
        locs = np.random.default_rng(1).random((1000, 2))
        r = build_corr_matrix(locs, MaternParams(1.0, 0.2, 0.5)).entries
        cholesky(r + 1e-8 * np.eye(1000), lower=True)

    def test_single_location_rejected(self):
        with pytest.raises(ValueError):
            build_corr_matrix(np.array([[0.1, 0.2]]), MaternParams(1.0, 0.2, 0.5))


class TestIcarPrecision:
    def test_two_node_path(self):
        graph = ArealGraph(np.array([[0, 1], [1, 0]]))
        prec = icar_precision(graph)
        np.testing.assert_array_equal(prec.Q, [[1, -1], [-1, 1]])
        assert prec.rank == 1

    def test_three_node_path(self):
        a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
        prec = icar_precision(ArealGraph(a))
        np.testing.assert_array_equal(np.diag(prec.Q), [1, 2, 1])
        np.testing.assert_array_equal(prec.Q, np.diag([1, 2, 1]) - a)

    def test_lattice_row_sums_zero_exactly(self):
        prec = icar_precision(lattice_graph(30, 30))
        assert prec.Q.dtype.kind == "i"
        np.testing.assert_array_equal(prec.Q.sum(axis=1), 0)
        np.testing.assert_array_equal(prec.Q.sum(axis=0), 0)

    def test_asymmetric_adjacency_rejected(self):
        a = np.array([[0, 1], [0, 0]])
        with pytest.raises(ValueError):
            ArealGraph(a)

    def test_nonbinary_rejected(self):
        with pytest.raises(ValueError):
            ArealGraph(np.array([[0, 2], [2, 0]]))


class TestGeneralizedInverse:
    def test_diagonal(self):
        out = generalized_inverse(np.diag([2.0, 0.0]))
        np.testing.assert_allclose(out, np.diag([0.5, 0.0]), atol=1e-14)

    def test_identity(self):
        np.testing.assert_allclose(generalized_inverse(np.eye(4)), np.eye(4), atol=1e-14)

    def test_two_node_path_penrose(self):
        q = icar_precision(ArealGraph(np.array([[0, 1], [1, 0]]))).Q.astype(float)
        pinv = generalized_inverse(q)
        np.testing.assert_allclose(q @ pinv @ q, q, atol=1e-10)

    @pytest.mark.parametrize("side", [5, 10, 20])
    def test_penrose_conditions_on_lattices(self, side):
        prec = icar_precision(lattice_graph(side, side))
        q = prec.Q.astype(float)
        g = generalized_inverse(prec)
        np.testing.assert_allclose(q @ g @ q, q, atol=1e-8)
        np.testing.assert_allclose(g @ q @ g, g, atol=1e-8)
        np.testing.assert_allclose((q @ g).T, q @ g, atol=1e-8)
        np.testing.assert_allclose((g @ q).T, g @ q, atol=1e-8)

    def test_accepts_icar_precision_object(self):
        prec = icar_precision(ArealGraph(np.array([[0, 1], [1, 0]])))
        assert isinstance(prec, IcarPrecision)
        out = generalized_inverse(prec)
        assert out.shape == (2, 2)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError):
            generalized_inverse(np.array([[1.0, 2.0], [0.0, 1.0]]))


class TestMaternParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            MaternParams(0.0, 0.2, 0.5)
        with pytest.raises(ValueError):
            MaternParams(1.0, 0.2, -1.0)
