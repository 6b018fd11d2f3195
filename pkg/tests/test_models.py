import numpy as np
import pytest
from scipy.linalg import eigh
from scipy.stats import multivariate_normal, norm, poisson

from rpspatial.covariance import MaternParams, build_corr_matrix
from rpspatial.models import (
    LinearMarginal,
    ModelSpec,
    PriorSpec,
    SpatialDataset,
    glmm_loglik,
    linear_marginal_loglik,
    make_basis,
    ortho_complement_apply,
    reconstruct_w,
)
from rpspatial.randproj import SketchConfig, approx_eigs
from rpspatial.simulate import sample_gp


@pytest.fixture
def small_problem(rng):
    n, p, m = 120, 2, 15
    locs = rng.random((n, 2))
    k_mat = build_corr_matrix(locs, MaternParams(1.0, 0.25, 0.5)).entries
    eig = approx_eigs(k_mat, SketchConfig(rank_m=m, seed=4))
    x_mat = rng.standard_normal((n, p))
    return locs, k_mat, eig, x_mat


class TestOrthoComplement:
    def test_annihilates_design(self, rng):
        x_mat = rng.standard_normal((40, 3))
        out = ortho_complement_apply(x_mat, x_mat)
        assert np.abs(out).max() < 1e-10

    def test_orthogonal_input_unchanged(self, rng):
        x_mat = rng.standard_normal((50, 2))
        m_mat = rng.standard_normal((50, 4))
        perp = m_mat - x_mat @ np.linalg.lstsq(x_mat, m_mat, rcond=None)[0]
        np.testing.assert_allclose(ortho_complement_apply(x_mat, perp), perp, atol=1e-12)

    def test_result_orthogonal_to_x(self, rng):
        x_mat = rng.standard_normal((50, 2))
        m_mat = rng.standard_normal((50, 5))
        out = ortho_complement_apply(x_mat, m_mat)
        assert np.abs(x_mat.T @ out).max() < 1e-10

    def test_rank_deficient_design_rejected(self, rng):
        x = rng.standard_normal((30, 1))
        x_mat = np.hstack([x, 2.0 * x])
        with pytest.raises(ValueError):
            ortho_complement_apply(x_mat, rng.standard_normal((30, 3)))


class TestMakeBasis:
    def test_frp_gram_is_eigenvalues(self, small_problem):
        _, _, eig, x_mat = small_problem
        basis = make_basis(eig, x_mat, restricted=False)
        np.testing.assert_allclose(basis.B.T @ basis.B, np.diag(eig.D), atol=1e-8)

    def test_rrp_orthogonal_to_x(self, small_problem):
        _, _, eig, x_mat = small_problem
        basis = make_basis(eig, x_mat, restricted=True)
        assert np.abs(x_mat.T @ basis.B).max() < 1e-10

    def test_unit_eigenvalues_give_u(self, small_problem):
        _, _, eig, x_mat = small_problem
        from dataclasses import replace

        unit = replace(eig, D=np.ones_like(eig.D))
        basis = make_basis(unit, x_mat, restricted=False)
        np.testing.assert_allclose(basis.B, eig.U)

    def test_projection_applied_after_approximation(self, small_problem):
        # the restricted basis is exactly the projected unrestricted basis,
        # i.e. eigencomponents come from R, not from the projected kernel
        _, _, eig, x_mat = small_problem
        frp = make_basis(eig, x_mat, restricted=False)
        rrp = make_basis(eig, x_mat, restricted=True)
        np.testing.assert_allclose(rrp.B, ortho_complement_apply(x_mat, frp.B), atol=1e-12)


class TestGlmmLoglik:
    def test_poisson_all_zero_at_zero_eta(self):
        n = 17
        z = np.zeros(n)
        x_mat = np.zeros((n, 1))
        b_mat = np.zeros((n, 1))
        ll = glmm_loglik(z, x_mat, b_mat, np.array([0.0]), np.array([0.0]), "poisson")
        assert ll == pytest.approx(-n)

    def test_logit_half_probability(self):
        n = 23
        z = np.ones(n)
        ll = glmm_loglik(z, np.zeros((n, 1)), np.zeros((n, 1)), np.zeros(1), np.zeros(1), "bernoulli-logit")
        assert ll == pytest.approx(n * np.log(0.5))

    def test_matches_scalar_density_sum(self, rng):
        n, p, m = 25, 2, 3
        x_mat = rng.standard_normal((n, p))
        b_mat = rng.standard_normal((n, m))
        beta = rng.standard_normal(p)
        delta = rng.standard_normal(m) * 0.3
        eta = x_mat @ beta + b_mat @ delta
        z_pois = rng.poisson(np.exp(eta)).astype(float)
        want = sum(poisson.logpmf(z_pois[i], np.exp(eta[i])) for i in range(n))
        got = glmm_loglik(z_pois, x_mat, b_mat, beta, delta, "poisson")
        assert got == pytest.approx(want, abs=1e-12)

        z_bin = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
        want = sum(
            np.log(1.0 / (1.0 + np.exp(-eta[i])) if z_bin[i] else 1.0 - 1.0 / (1.0 + np.exp(-eta[i])))
            for i in range(n)
        )
        got = glmm_loglik(z_bin, x_mat, b_mat, beta, delta, "bernoulli-logit")
        assert got == pytest.approx(want, abs=1e-10)

    def test_poisson_overflow_guard(self):
        z = np.zeros(3)
        ll = glmm_loglik(z, np.full((3, 1), 800.0), np.zeros((3, 1)), np.ones(1), np.zeros(1), "poisson")
        assert ll == -np.inf

    def test_signal_beats_null_eta(self, rng):
        n = 200
        eta_true = rng.normal(0.5, 1.0, n)
        z = rng.poisson(np.exp(eta_true)).astype(float)
        x_mat = eta_true[:, None]
        b = np.zeros((n, 1))
        ll_true = glmm_loglik(z, x_mat, b, np.ones(1), np.zeros(1), "poisson")
        ll_null = glmm_loglik(z, x_mat, b, np.zeros(1), np.zeros(1), "poisson")
        assert ll_true > ll_null


class TestLinearMarginal:
    def test_matches_dense_over_random_configs(self, rng):
        n, m, p = 150, 20, 2
        locs = rng.random((n, 2))
        k_mat = build_corr_matrix(locs, MaternParams(1.0, 0.2, 0.5)).entries
        eig = approx_eigs(k_mat, SketchConfig(rank_m=m, seed=5))
        x_mat = rng.standard_normal((n, p))
        y = rng.standard_normal(n)
        for i in range(50):
            sigma2 = float(rng.uniform(0.2, 3.0))
            tau2 = float(rng.uniform(0.05, 1.0))
            beta = rng.standard_normal(p)
            restricted = bool(i % 2)
            b_mat = make_basis(eig, x_mat, restricted).B
            dense = multivariate_normal.logpdf(
                y, mean=x_mat @ beta, cov=sigma2 * (b_mat @ b_mat.T) + tau2 * np.eye(n)
            )
            fast = linear_marginal_loglik(y, x_mat, beta, sigma2, tau2, eig, restricted)
            assert fast == pytest.approx(dense, abs=1e-7)

    def test_exact_rank_matches_full_covariance(self, rng):
        # a full-rank sketch makes B B' reproduce R, so the fast path must
        # agree with the dense likelihood under the original covariance
        n = 100
        locs = rng.random((n, 2))
        k_mat = build_corr_matrix(locs, MaternParams(1.0, 0.3, 0.5)).entries
        cfg = SketchConfig(rank_m=n, oversample_l=0, power_alpha=0, seed=7)
        eig = approx_eigs(k_mat, cfg)
        x_mat = rng.standard_normal((n, 2))
        y = rng.standard_normal(n)
        beta = np.array([0.4, -0.2])
        dense = multivariate_normal.logpdf(y, mean=x_mat @ beta, cov=1.3 * k_mat + 0.2 * np.eye(n))
        fast = linear_marginal_loglik(y, x_mat, beta, 1.3, 0.2, eig, restricted=False)
        assert fast == pytest.approx(dense, abs=1e-6)

    def test_sigma2_zero_limit_is_iid(self, rng):
        n = 80
        locs = rng.random((n, 2))
        eig = approx_eigs(
            build_corr_matrix(locs, MaternParams(1.0, 0.2, 0.5)).entries,
            SketchConfig(rank_m=10, seed=1),
        )
        x_mat = rng.standard_normal((n, 2))
        y = rng.standard_normal(n)
        beta = np.zeros(2)
        fast = linear_marginal_loglik(y, x_mat, beta, 1e-12, 0.5, eig, restricted=False)
        iid = norm.logpdf(y, 0.0, np.sqrt(0.5)).sum()
        assert fast == pytest.approx(iid, abs=1e-8)

    def test_frp_equals_rrp_when_x_orthogonal_to_basis(self, rng):
        # if X already lies outside span(U), the projection changes nothing
        n, m = 60, 5
        q, _ = np.linalg.qr(rng.standard_normal((n, m + 2)))
        u, x_mat = q[:, :m], q[:, m:]
        eig_like = approx_eigs(np.eye(n), SketchConfig(rank_m=m, seed=0))
        from dataclasses import replace

        eig = replace(eig_like, U=u, D=np.linspace(3.0, 1.0, m))
        y = rng.standard_normal(n)
        beta = rng.standard_normal(2)
        full = linear_marginal_loglik(y, x_mat, beta, 1.1, 0.3, eig, restricted=False)
        restr = linear_marginal_loglik(y, x_mat, beta, 1.1, 0.3, eig, restricted=True)
        assert full == pytest.approx(restr, abs=1e-10)

    def test_determinant_lemma_against_dense(self, rng):
        n, m = 150, 20
        locs = rng.random((n, 2))
        k_mat = build_corr_matrix(locs, MaternParams(1.0, 0.2, 0.5)).entries
        eig = approx_eigs(k_mat, SketchConfig(rank_m=m, seed=5))
        x_mat = rng.standard_normal((n, 2))
        for restricted in (False, True):
            b_mat = make_basis(eig, x_mat, restricted).B
            marg = LinearMarginal(np.zeros(n), x_mat, make_basis(eig, x_mat, restricted))
            for _ in range(25):
                s2 = float(rng.uniform(0.2, 3.0))
                t2 = float(rng.uniform(0.05, 1.0))
                cov = s2 * (b_mat @ b_mat.T) + t2 * np.eye(n)
                dense_logdet = np.linalg.slogdet(cov)[1]
                # recover the log determinant from two likelihood evaluations:
                # ll = -0.5 (n log 2pi + logdet + quad); at Y=0, beta=0 quad=0
                ll = marg.loglik(np.zeros(2), s2, t2)
                fast_logdet = -2.0 * ll - n * np.log(2.0 * np.pi)
                assert fast_logdet == pytest.approx(dense_logdet, abs=1e-7)

    def test_invalid_variances(self, small_problem):
        _, _, eig, x_mat = small_problem
        y = np.zeros(120)
        with pytest.raises(ValueError):
            linear_marginal_loglik(y, x_mat, np.zeros(2), -1.0, 0.5, eig, False)
        with pytest.raises(ValueError):
            linear_marginal_loglik(y, x_mat, np.zeros(2), 1.0, 0.0, eig, False)


class TestReconstructW:
    def test_zero_delta(self, small_problem):
        _, _, eig, x_mat = small_problem
        basis = make_basis(eig, x_mat, restricted=False)
        np.testing.assert_array_equal(reconstruct_w(basis, np.zeros(15)), np.zeros(120))

    def test_unit_delta_scales_first_column(self, small_problem):
        _, _, eig, x_mat = small_problem
        basis = make_basis(eig, x_mat, restricted=False)
        e1 = np.zeros(15)
        e1[0] = 1.0
        np.testing.assert_allclose(reconstruct_w(basis, e1), np.sqrt(eig.D[0]) * eig.U[:, 0])

    def test_restricted_basis_warns(self, small_problem):
        _, _, eig, x_mat = small_problem
        basis = make_basis(eig, x_mat, restricted=True)
        with pytest.warns(RuntimeWarning):
            reconstruct_w(basis, np.zeros(15))

    def test_round_trip_error_bounded_by_tail_mass(self, rng):
        # project a GP draw onto the reduced basis and reconstruct: the
        # relative error is controlled by the trailing eigenvalue mass
        n, m = 200, 60
        locs = rng.random((n, 2))
        k_mat = build_corr_matrix(locs, MaternParams(1.0, 0.3, 2.5)).entries
        lam = eigh(k_mat, eigvals_only=True)[::-1]
        tail_mass = lam[m:].sum() / lam.sum()
        eig = approx_eigs(k_mat, SketchConfig(rank_m=m, power_alpha=2, seed=3))
        w = sample_gp(locs, MaternParams(1.0, 0.3, 2.5), seed=9)
        delta = (eig.U / np.sqrt(eig.D)).T @ w
        w_hat = reconstruct_w(make_basis(eig, locs, restricted=False), delta)
        rel_err = np.linalg.norm(w - w_hat) ** 2 / np.linalg.norm(w) ** 2
        assert rel_err <= max(tail_mass, 1e-12) * 50  # generous multiple of the tail bound


class TestSpatialDataset:
    def test_rejects_rank_deficient_x(self, rng):
        locs = rng.random((20, 2))
        x = rng.standard_normal((20, 1))
        with pytest.raises(ValueError):
            SpatialDataset(X=np.hstack([x, x]), response=np.zeros(20), family="gaussian", locations=locs)

    def test_rejects_bad_counts(self, rng):
        locs = rng.random((10, 2))
        with pytest.raises(ValueError):
            SpatialDataset(
                X=rng.standard_normal((10, 2)),
                response=np.full(10, -1.0),
                family="poisson",
                locations=locs,
            )

    def test_rejects_nonbinary(self, rng):
        locs = rng.random((10, 2))
        with pytest.raises(ValueError):
            SpatialDataset(
                X=rng.standard_normal((10, 2)),
                response=np.full(10, 0.5),
                family="bernoulli-logit",
                locations=locs,
            )

    def test_restricted_rank_bound(self, rng):
        locs = rng.random((30, 2))
        data = SpatialDataset(
            X=rng.standard_normal((30, 2)), response=np.zeros(30), family="gaussian", locations=locs
        )
        spec = ModelSpec(restricted=True, rank_m=29, nugget=True)
        with pytest.raises(ValueError):
            spec.validate_for(data)

    def test_gaussian_requires_nugget(self, rng):
        locs = rng.random((30, 2))
        data = SpatialDataset(
            X=rng.standard_normal((30, 2)), response=np.zeros(30), family="gaussian", locations=locs
        )
        with pytest.raises(ValueError):
            ModelSpec(restricted=False, rank_m=5, nugget=False).validate_for(data)


class TestPriorSpec:
    def test_defaults(self):
        priors = PriorSpec()
        assert priors.beta_var == 100.0
        assert priors.sigma2_ig == (2.0, 2.0)
        assert priors.tau2_ig == (2.0, 1.0)
        assert priors.phi_range == (0.01, 1.5)

    def test_validation(self):
        with pytest.raises(ValueError):
            PriorSpec(beta_var=-1.0)
        with pytest.raises(ValueError):
            PriorSpec(phi_range=(1.5, 0.01))
