import numpy as np
import pytest
from scipy.stats import kstest, norm, uniform

from rpspatial import mcmc
from rpspatial.covariance import MaternParams
from rpspatial.mcmc import (
    ChainState,
    McmcConfig,
    PosteriorSummary,
    batch_means_se,
    baseline_full_w_chain,
    dic,
    ess,
    mcmc_se_check,
    mh_update_beta,
    mh_update_delta_block,
    mh_update_phi,
    mh_update_sigma2,
    posterior_adjust,
    predict,
    run_chain,
    run_chains,
    summarize_chain,
)
from rpspatial.models import ModelSpec, PriorSpec, SpatialDataset
from rpspatial.randproj import SketchConfig
from rpspatial.simulate import SimScheme, simulate_dataset


def _blank_state(p=2, m=5, sigma2=1.0):
    return ChainState(
        beta=np.zeros(p),
        delta=np.zeros(m),
        sigma2=sigma2,
        phi=0.2,
        loglik=0.0,
    )


@pytest.fixture(scope="module")
def poisson_fixture():
    scheme = SimScheme(scheme="confounded", family="poisson", n=120, seed=21)
    data, truth = simulate_dataset(scheme)
    return data, truth


@pytest.fixture(scope="module")
def gaussian_fixture():
    scheme = SimScheme(scheme="confounded", family="gaussian", n=150, seed=22)
    data, truth = simulate_dataset(scheme)
    return data, truth


class TestBetaUpdate:
    def test_zero_variance_proposal_accepts_and_keeps_state(self, rng):
        state = _blank_state()
        out, accepts = mh_update_beta(state, None, None, PriorSpec(), 0.0, rng)
        assert accepts.all()
        np.testing.assert_array_equal(out.beta, np.zeros(2))

    def test_prior_recovery(self):
        # likelihood disabled: the block must target N(0, 100 I)
        rng = np.random.default_rng(8)
        state = _blank_state(p=1)
        draws = np.empty(100_000)
        for i in range(draws.shape[0]):
            state, _ = mh_update_beta(state, None, None, PriorSpec(), 8.0, rng)
            draws[i] = state.beta[0]
        assert abs(draws.var() - 100.0) / 100.0 < 0.10
        ks = kstest(draws[::10], norm(scale=10.0).cdf).statistic
        assert ks < 0.02

    def test_acceptance_monotone_in_scale(self, poisson_fixture):
        data, _ = poisson_fixture
        rates = []
        for scale in (0.02, 0.2, 2.0):
            rng = np.random.default_rng(3)
            state = _blank_state(p=2, m=1)
            state.basis = np.zeros((data.n, 1))
            state.eta = data.X @ state.beta
            from rpspatial.models import glmm_loglik_eta

            state.loglik = glmm_loglik_eta(data.response, state.eta, data.family)
            acc = 0
            for _ in range(400):
                state, a = mh_update_beta(state, data, None, PriorSpec(), scale, rng)
                acc += a.sum()
            rates.append(acc / (400 * 2))
        assert rates[0] > rates[1] > rates[2]


class TestSigma2Update:
    def test_conjugate_moments_zero_delta(self):
        rng = np.random.default_rng(5)
        state = _blank_state(m=6)
        draws = np.array(
            [mh_update_sigma2(state, PriorSpec(), rng).sigma2 for _ in range(100_000)]
        )
        # IG(2 + m/2, 2) has mean 2 / (1 + m/2)
        want = 2.0 / (1.0 + 3.0)
        assert abs(draws.mean() - want) / want < 0.02

    def test_posterior_concentration(self):
        rng = np.random.default_rng(6)
        m = 10_000
        state = _blank_state(m=m)
        state.delta = np.sqrt(3.0) * np.ones(m)
        draws = np.array([mh_update_sigma2(state, PriorSpec(), rng).sigma2 for _ in range(200)])
        assert abs(draws.mean() - 3.0) / 3.0 < 0.05

    def test_seed_reproducibility(self):
        s1 = mh_update_sigma2(_blank_state(), PriorSpec(), np.random.default_rng(1)).sigma2
        s2 = mh_update_sigma2(_blank_state(), PriorSpec(), np.random.default_rng(1)).sigma2
        assert s1 == s2


class TestDeltaBlockUpdate:
    def test_zero_scale_constant_chain(self, rng):
        state = _blank_state()
        state.delta = np.ones(5)
        out, accepted = mh_update_delta_block(state, None, None, 0.0, rng)
        assert accepted
        np.testing.assert_array_equal(out.delta, np.ones(5))

    def test_prior_recovery(self):
        rng = np.random.default_rng(9)
        state = _blank_state(m=3, sigma2=2.0)
        draws = np.empty((100_000, 3))
        for i in range(draws.shape[0]):
            state, _ = mh_update_delta_block(state, None, None, 1.8, rng)
            draws[i] = state.delta
        assert abs(draws.var() - 2.0) / 2.0 < 0.10
        ks = kstest(draws[::10, 0], norm(scale=np.sqrt(2.0)).cdf).statistic
        assert ks < 0.02


class TestPhiUpdate:
    def test_out_of_support_auto_rejects(self, rng):
        spec = ModelSpec(restricted=False, rank_m=5)
        state = _blank_state()
        state.phi = 1.49
        for _ in range(50):
            state, _ = mh_update_phi(state, None, None, spec, None, 10.0, rng, 0)
            assert 0.01 <= state.phi <= 1.5

    def test_prior_recovery_uniform(self):
        rng = np.random.default_rng(10)
        spec = ModelSpec(restricted=False, rank_m=5)
        state = _blank_state()
        draws = np.empty(100_000)
        for i in range(draws.shape[0]):
            state, _ = mh_update_phi(state, None, None, spec, None, 0.6, rng, 0)
            draws[i] = state.phi
        ks = kstest(draws[::10], uniform(loc=0.01, scale=1.49).cdf).statistic
        assert ks < 0.02


class TestRunChainLinear:
    def test_seed_determinism(self, gaussian_fixture):
        data, _ = gaussian_fixture
        spec = ModelSpec(restricted=False, rank_m=20, nugget=True)
        config = McmcConfig(iterations=400, seed=13, phi_grid=15)
        c1 = run_chain(data, spec, config)
        c2 = run_chain(data, spec, config)
        for key in c1.samples:
            np.testing.assert_array_equal(c1.samples[key], c2.samples[key])

    def test_sample_count_layout(self, gaussian_fixture):
        data, _ = gaussian_fixture
        spec = ModelSpec(restricted=False, rank_m=10, nugget=True)
        config = McmcConfig(iterations=500, burnin=100, thin=4, seed=1, phi_grid=10)
        chain = run_chain(data, spec, config)
        assert chain.n_samples == len(range(100, 500, 4))

    def test_recovers_nugget_variance(self, gaussian_fixture):
        data, truth = gaussian_fixture
        spec = ModelSpec(restricted=False, rank_m=30, nugget=True)
        chain = run_chain(data, spec, McmcConfig(iterations=2000, seed=3, phi_grid=25))
        tau2_mean = chain.samples["tau2"].mean()
        assert 0.04 < tau2_mean < 0.3  # truth 0.1

    def test_run_chains_distinct_seeds(self, gaussian_fixture):
        data, _ = gaussian_fixture
        spec = ModelSpec(restricted=False, rank_m=10, nugget=True)
        chains = run_chains(data, spec, McmcConfig(iterations=300, seed=5, n_chains=2, phi_grid=10))
        assert len(chains) == 2
        assert not np.array_equal(chains[0].samples["beta"], chains[1].samples["beta"])


class TestRunChainGlmm:
    def test_seed_determinism(self, poisson_fixture):
        data, _ = poisson_fixture
        spec = ModelSpec(restricted=True, rank_m=15)
        config = McmcConfig(iterations=400, seed=2, phi_grid=12)
        c1 = run_chain(data, spec, config)
        c2 = run_chain(data, spec, config)
        for key in c1.samples:
            np.testing.assert_array_equal(c1.samples[key], c2.samples[key])

    def test_degenerate_intercept_poisson(self, rng):
        # all-ones response with a pure intercept: posterior centers near log 1
        locs = rng.random((20, 2))
        data = SpatialDataset(
            X=np.ones((20, 1)),
            response=np.ones(20),
            family="poisson",
            locations=locs,
        )
        spec = ModelSpec(restricted=False, rank_m=5)
        chain = run_chain(data, spec, McmcConfig(iterations=4000, seed=7, phi_grid=10))
        beta = chain.samples["beta"][:, 0]
        lo, hi = np.quantile(beta, [0.025, 0.975])
        assert lo < 0.0 < hi
        assert abs(beta.mean()) < 0.8

    def test_poisson_no_tau2_column(self, poisson_fixture):
        data, _ = poisson_fixture
        chain = run_chain(data, ModelSpec(restricted=False, rank_m=10), McmcConfig(iterations=300, seed=1, phi_grid=10))
        assert "tau2" not in chain.samples


class TestPosteriorAdjust:
    def test_requires_restricted_chain(self, gaussian_fixture):
        data, _ = gaussian_fixture
        chain = run_chain(
            data, ModelSpec(restricted=False, rank_m=10, nugget=True), McmcConfig(iterations=300, seed=1, phi_grid=10)
        )
        with pytest.raises(ValueError):
            posterior_adjust(chain, data.X)

    def test_identity_against_least_squares(self, gaussian_fixture):
        data, _ = gaussian_fixture
        chain = run_chain(
            data, ModelSpec(restricted=True, rank_m=15, nugget=True), McmcConfig(iterations=400, seed=4, phi_grid=10)
        )
        adjusted = posterior_adjust(chain, data.X)
        for i in (0, 17, chain.n_samples - 1):
            eig = chain.provider.eig_for(chain.samples["phi"][i], int(chain.samples["sketch_seed"][i]))
            w = eig.basis() @ chain.samples["delta"][i]
            direct = chain.samples["beta"][i] - np.linalg.lstsq(data.X, w, rcond=None)[0]
            np.testing.assert_allclose(adjusted[i], direct, atol=1e-12)

    def test_zero_delta_no_change(self, gaussian_fixture):
        data, _ = gaussian_fixture
        chain = run_chain(
            data, ModelSpec(restricted=True, rank_m=15, nugget=True), McmcConfig(iterations=300, seed=4, phi_grid=10)
        )
        chain.samples["delta"][:] = 0.0
        adjusted = posterior_adjust(chain, data.X)
        np.testing.assert_array_equal(adjusted, chain.samples["beta"])


@pytest.fixture(scope="module")
def probit_chain():
    scheme = SimScheme(scheme="confounded", family="bernoulli-probit", n=120, tau2=1.0, seed=30)
    data, _ = simulate_dataset(scheme)
    spec = ModelSpec(restricted=False, rank_m=15, nugget=True)
    chain = run_chain(data, spec, McmcConfig(iterations=800, seed=6, phi_grid=10))
    return data, chain


class TestProbitChain:
    def test_truncation_contract_every_iteration(self, probit_chain):
        data, chain = probit_chain
        assert chain.extras["truncation_violations"] == 0
        latent = chain.extras["latent"]
        pos = data.response == 1.0
        assert np.all(latent[:, pos] >= 0.0)
        assert np.all(latent[:, ~pos] < 0.0)

    def test_coefficient_gibbs_matches_gls_solution(self, rng):
        # with tau2 fixed and a flat-ish prior, the conditional posterior mean
        # of the joint coefficients equals the ridge-GLS solution
        n, p, m = 200, 2, 4
        x_phi = rng.standard_normal((n, p + m))
        coef_true = rng.standard_normal(p + m)
        y = x_phi @ coef_true + rng.standard_normal(n)
        tau2 = 1.0
        prior_diag = np.concatenate([np.full(p, 1.0 / 1e6), np.full(m, 1.0 / 1e6)])
        prec = x_phi.T @ x_phi / tau2 + np.diag(prior_diag)
        want = np.linalg.solve(prec, x_phi.T @ y / tau2)
        ols = np.linalg.lstsq(x_phi, y, rcond=None)[0]
        np.testing.assert_allclose(want, ols, atol=1e-6)

    def test_wrong_family_rejected(self, poisson_fixture):
        data, _ = poisson_fixture
        with pytest.raises(ValueError):
            mcmc.probit_gibbs_chain(data, ModelSpec(restricted=False, rank_m=5, nugget=True), McmcConfig(iterations=10))


class TestEss:
    def test_iid_close_to_n(self):
        x = np.random.default_rng(0).standard_normal(10_000)
        assert abs(ess(x) - 10_000) / 10_000 < 0.15

    def test_ar1_analytic(self):
        rng = np.random.default_rng(1)
        rho, n = 0.9, 100_000
        x = np.empty(n)
        x[0] = rng.standard_normal()
        eps = rng.standard_normal(n) * np.sqrt(1 - rho**2)
        for i in range(1, n):
            x[i] = rho * x[i - 1] + eps[i]
        want = n * (1 - rho) / (1 + rho)
        assert abs(ess(x) - want) / want < 0.20

    def test_constant_chain_zero_with_warning(self):
        with pytest.warns(RuntimeWarning):
            assert ess(np.ones(500)) == 0.0

    def test_short_chain_rejected(self):
        with pytest.raises(ValueError):
            ess(np.ones(50))

    def test_capped_at_n(self):
        # antithetic-ish chain can push the naive estimator above n
        x = np.tile([1.0, -1.0], 500) + np.random.default_rng(2).standard_normal(1000) * 0.1
        assert ess(x) <= 1000


class TestMcmcSeCheck:
    def test_iid_large_sample_passes(self, gaussian_fixture):
        data, _ = gaussian_fixture
        chain = run_chain(
            data, ModelSpec(restricted=False, rank_m=10, nugget=True), McmcConfig(iterations=2500, seed=2, phi_grid=10)
        )
        results = mcmc_se_check(chain, threshold=1.0)
        assert all(v["ok"] for v in results.values())

    def test_boundary_strictness(self):
        x = np.random.default_rng(3).standard_normal(10_000)
        se = batch_means_se(x)
        fake_chain_result = se < se  # boundary: se == threshold must fail
        assert not fake_chain_result

    def test_batch_means_iid_scaling(self):
        x = np.random.default_rng(4).standard_normal(1_000_000)
        se = batch_means_se(x)
        assert se == pytest.approx(0.001, rel=0.25)

    def test_noisy_short_chain_fails(self, gaussian_fixture):
        data, _ = gaussian_fixture
        chain = run_chain(
            data, ModelSpec(restricted=True, rank_m=10, nugget=True), McmcConfig(iterations=150, seed=2, phi_grid=10)
        )
        results = mcmc_se_check(chain, threshold=1e-6)
        assert not all(v["ok"] for v in results.values())


class TestDic:
    def test_point_mass_chain_pd_zero(self, poisson_fixture):
        data, _ = poisson_fixture
        chain = run_chain(data, ModelSpec(restricted=False, rank_m=10), McmcConfig(iterations=300, seed=5, phi_grid=10))
        # freeze the chain at one state: every stored sample identical
        for key in ("beta", "delta", "sigma2", "phi", "loglik", "sketch_seed"):
            chain.samples[key][:] = chain.samples[key][0]
        from rpspatial.models import make_basis, glmm_loglik_eta

        eig = chain.provider.eig_for(chain.samples["phi"][0], int(chain.samples["sketch_seed"][0]))
        basis = make_basis(eig, data.X, False).B
        eta = data.X @ chain.samples["beta"][0] + basis @ chain.samples["delta"][0]
        chain.extras["eta_mean"] = eta
        chain.samples["loglik"][:] = glmm_loglik_eta(data.response, eta, data.family)
        val = dic(chain, data)
        assert val == pytest.approx(-2.0 * chain.samples["loglik"][0], abs=1e-8)

    def test_rank_comparison_on_long_range_data(self):
        scheme = SimScheme(scheme="confounded", family="poisson", n=250, seed=41)
        data, _ = simulate_dataset(scheme)
        config = McmcConfig(iterations=2500, seed=11, phi_grid=15)
        dics = {}
        for m in (10, 50):
            chain = run_chain(data, ModelSpec(restricted=True, rank_m=m), config)
            dics[m] = dic(chain, data)
        assert np.isfinite(dics[10]) and np.isfinite(dics[50])
        assert dics[50] <= dics[10]


class TestPredict:
    def test_interpolation_consistency_small_nugget(self, rng):
        # prediction at a training site reproduces the fitted surface when the
        # nugget is negligible
        scheme = SimScheme(scheme="confounded", family="gaussian", n=120, tau2=0.001, seed=33)
        data, truth = simulate_dataset(scheme)
        spec = ModelSpec(restricted=False, rank_m=40, nugget=True)
        chain = run_chain(data, spec, McmcConfig(iterations=1500, seed=3, phi_grid=20))
        pred = predict(chain, data.locations[:5], data)
        fitted = data.response[:5]
        np.testing.assert_allclose(pred.mean, fitted, atol=0.25)

    def test_constant_field_flat_surface(self, rng):
        locs = rng.random((60, 2))
        data = SpatialDataset(
            X=np.ones((60, 1)), response=np.full(60, 2.0), family="gaussian", locations=locs
        )
        spec = ModelSpec(restricted=False, rank_m=10, nugget=True)
        chain = run_chain(data, spec, McmcConfig(iterations=1500, seed=4, phi_grid=10))
        grid = rng.random((30, 2))
        pred = predict(chain, grid, data, new_X=np.ones((30, 1)))
        assert np.abs(pred.mean - 2.0).max() < 0.35

    def test_deterministic(self, gaussian_fixture):
        data, truth = gaussian_fixture
        chain = run_chain(
            data, ModelSpec(restricted=False, rank_m=10, nugget=True), McmcConfig(iterations=300, seed=2, phi_grid=10)
        )
        p1 = predict(chain, truth.grid_locations[:10], data, seed=1)
        p2 = predict(chain, truth.grid_locations[:10], data, seed=1)
        np.testing.assert_array_equal(p1.mean, p2.mean)
        np.testing.assert_array_equal(p1.obs_lower, p2.obs_lower)

    def test_gaussian_obs_intervals_wider(self, gaussian_fixture):
        data, truth = gaussian_fixture
        chain = run_chain(
            data, ModelSpec(restricted=False, rank_m=10, nugget=True), McmcConfig(iterations=600, seed=2, phi_grid=10)
        )
        pred = predict(chain, truth.grid_locations[:20], data)
        assert np.all(pred.obs_upper - pred.obs_lower >= pred.upper - pred.lower - 1e-9)


class TestSummaries:
    def test_interval_ordering(self, gaussian_fixture):
        data, _ = gaussian_fixture
        chain = run_chain(
            data, ModelSpec(restricted=False, rank_m=10, nugget=True), McmcConfig(iterations=400, seed=2, phi_grid=10)
        )
        for s in summarize_chain(chain).values():
            assert s.ci_lower <= s.ci_upper

    def test_posterior_summary_validation(self):
        with pytest.raises(ValueError):
            PosteriorSummary(mean=0.0, ci_lower=1.0, ci_upper=-1.0, ess=10.0, mcse=0.1)

    def test_adjusted_flag(self, gaussian_fixture):
        data, _ = gaussian_fixture
        chain = run_chain(
            data, ModelSpec(restricted=True, rank_m=10, nugget=True), McmcConfig(iterations=400, seed=2, phi_grid=10)
        )
        adjusted = posterior_adjust(chain, data.X)
        summaries = summarize_chain(chain, adjusted_beta=adjusted)
        assert summaries["beta_1"].adjusted
        assert not summaries["sigma2"].adjusted


class TestBaselineSampler:
    def test_runs_and_tracks_w(self, poisson_fixture):
        data, _ = poisson_fixture
        chain = baseline_full_w_chain(
            data, sigma2=1.0, phi=0.2, nu=2.5, config=McmcConfig(iterations=300, seed=3)
        )
        assert chain.samples["delta"].shape == (chain.n_samples, data.n)
        assert 0.0 < chain.acceptance["w"] < 1.0
