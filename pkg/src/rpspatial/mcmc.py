"""Metropolis-within-Gibbs samplers for the reduced-rank spatial models.

Families and their block structure:

* gaussian (nugget): conjugate Gibbs for beta against the fast low-rank
  marginal, log-scale random walks for sigma2 / tau2, random walk for phi,
  and a compositional conjugate draw of delta on every retained iteration.
* poisson / bernoulli-logit: one-variable-at-a-time random walks for beta,
  a spherical-normal block proposal for delta, conjugate inverse-gamma Gibbs
  for sigma2, and a random walk for phi that re-approximates the eigenbasis.
* bernoulli-probit (nugget): fully conjugate Gibbs with truncated-normal
  latent draws, a joint normal draw of (beta, delta), inverse-gamma draws for
  tau2 / sigma2, and a random walk for phi.
* areal data: the covariance (generalized inverse of the ICAR precision) is
  fixed, so it is sketched once and there is no phi block; the smoothing
  parameter enters as sigma2 = 1 / tau_smooth with its inverse-gamma prior.

A phi move re-draws the sketch from a dedicated seed substream by default;
with ``phi_grid`` set, phi walks a discrete grid whose sketches are computed
once per grid point, which keeps long study runs cheap. Chains replay
bit-identically for a fixed (data, spec, config, seed).
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.spatial.distance import cdist, squareform, pdist
from scipy.special import expit
from scipy.stats import norm, truncnorm

from .covariance import generalized_inverse, icar_precision, matern_corr
from .models import (
    LinearMarginal,
    LinearPredictorBasis,
    ModelSpec,
    OrthoProjector,
    PriorSpec,
    SpatialDataset,
    glmm_loglik_eta,
    make_basis,
)
from .randproj import EigenApprox, SketchConfig, approx_eigs

__all__ = [
    "McmcConfig",
    "ChainState",
    "Chain",
    "PosteriorSummary",
    "BasisProvider",
    "mh_update_beta",
    "mh_update_sigma2",
    "mh_update_phi",
    "mh_update_delta_block",
    "run_chain",
    "run_chains",
    "probit_gibbs_chain",
    "posterior_adjust",
    "predict",
    "PredictionResult",
    "ess",
    "batch_means_se",
    "mcmc_se_check",
    "dic",
    "summarize_chain",
    "baseline_full_w_chain",
]

log = logging.getLogger(__name__)

_SEED_MAX = 2**63 - 1


@dataclass(frozen=True)
class McmcConfig:
    """Sampler settings; burnin defaults to 20% of iterations."""

    iterations: int = 4000
    burnin: int | None = None
    thin: int = 1
    seed: int = 0
    n_chains: int = 1
    adapt: bool = True
    scales: dict = field(
        default_factory=lambda: {
            "beta": 0.3,
            "delta": 0.1,
            "phi": 0.1,
            "sigma2": 0.8,
            "tau2": 0.8,
        }
    )
    phi_grid: int | None = None
    resketch: bool = True
    store_latent: bool = True
    fix_phi: float | None = None
    fix_sigma2: float | None = None
    # one-variable-at-a-time delta updates mix far better than the spherical
    # block proposal at desk scale; the block update remains available
    delta_block: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.burnin is not None and not 0 <= self.burnin < self.iterations:
            raise ValueError("burnin must satisfy 0 <= burnin < iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if any(v <= 0 for v in self.scales.values()):
            raise ValueError("proposal scales must be positive")

    @property
    def effective_burnin(self) -> int:
        return self.iterations // 5 if self.burnin is None else self.burnin

    def with_seed(self, seed: int) -> "McmcConfig":
        return replace(self, seed=int(seed))


@dataclass
class ChainState:
    """One MCMC state; cached eta / loglik stay consistent with the parameters."""

    beta: np.ndarray
    delta: np.ndarray
    sigma2: float
    phi: float
    tau2: float | None = None
    latent: np.ndarray | None = None
    eig: EigenApprox | None = None
    basis: np.ndarray | None = None
    eta: np.ndarray | None = None
    loglik: float = 0.0
    sketch_seed: int = 0


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean, 95% equal-tail interval, ESS and batch-means MCSE."""

    mean: float
    ci_lower: float
    ci_upper: float
    ess: float
    mcse: float
    adjusted: bool = False

    def __post_init__(self):
        if self.ci_lower > self.ci_upper:
            raise ValueError("credible interval bounds out of order")


@dataclass
class BasisProvider:
    """Rebuilds eigenbases deterministically from (phi, sketch seed).

    For point-referenced data the kernel is the Matern correlation matrix of
    the stored locations; for areal data it is the fixed generalized inverse
    of the ICAR precision (phi is ignored). Prediction uses the Nystrom
    out-of-sample extension b*(s) = r*(s)' U D^{-1/2}.
    """

    kind: str
    sketch: SketchConfig
    nu: float | None = None
    locations: np.ndarray | None = None
    kernel: np.ndarray | None = None
    _dist: np.ndarray | None = field(default=None, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def kernel_matrix(self, phi: float) -> np.ndarray:
        if self.kind == "areal":
            return self.kernel
        if self._dist is None:
            self._dist = squareform(pdist(self.locations))
        r = matern_corr(self._dist, phi, self.nu)
        np.fill_diagonal(r, 1.0)
        return r

    def eig_for(self, phi: float, seed: int) -> EigenApprox:
        key = (round(float(phi), 12), int(seed))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        eig = approx_eigs(
            self.kernel_matrix(phi),
            self.sketch.with_seed(seed),
            source_phi=None if self.kind == "areal" else float(phi),
        )
        if len(self._cache) < 256:
            self._cache[key] = eig
        return eig

    def cross_basis(self, new_locations, eig: EigenApprox) -> np.ndarray:
        if self.kind == "areal":
            idx = np.asarray(new_locations, dtype=int).ravel()
            r_star = self.kernel[idx, :]
        else:
            r_star = matern_corr(
                cdist(np.atleast_2d(np.asarray(new_locations, dtype=float)), self.locations),
                eig.source_phi,
                self.nu,
            )
        return r_star @ (eig.U / np.sqrt(eig.D))


def _make_provider(data: SpatialDataset, spec: ModelSpec) -> BasisProvider:
    cfg = spec.sketch_config()
    if data.is_areal:
        k = generalized_inverse(icar_precision(data.graph))
        return BasisProvider(kind="areal", sketch=cfg, kernel=k)
    return BasisProvider(kind="matern", sketch=cfg, nu=spec.nu, locations=data.locations)


@dataclass
class Chain:
    """Stored sample path plus everything needed to rebuild bases per sample."""

    samples: dict
    acceptance: dict
    seed: int
    model: ModelSpec
    config: McmcConfig
    family: str
    provider: BasisProvider
    extras: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.samples["beta"].shape[0]


# ---------------------------------------------------------------------------
# block updates (the sampler loops below are built from these)
# ---------------------------------------------------------------------------


def mh_update_beta(state, data, basis, priors, scales, rng):
    """One-variable-at-a-time Gaussian random-walk update of beta.

    With ``data=None`` the likelihood term is dropped, so the block targets
    its N(0, beta_var I) prior (used by the prior-recovery tests).
    """
    p = state.beta.shape[0]
    scales = np.broadcast_to(np.asarray(scales, dtype=float), (p,))
    accepts = np.zeros(p, dtype=bool)
    for j in range(p):
        step = scales[j] * rng.standard_normal()
        if step == 0.0:
            accepts[j] = True
            continue
        prop = state.beta[j] + step
        log_ratio = (state.beta[j] ** 2 - prop**2) / (2.0 * priors.beta_var)
        eta_prop = None
        ll_prop = state.loglik
        if data is not None:
            eta_prop = state.eta + data.X[:, j] * step
            ll_prop = glmm_loglik_eta(data.response, eta_prop, data.family)
            log_ratio += ll_prop - state.loglik
        if np.log(rng.random()) < log_ratio:
            state.beta[j] = prop
            if data is not None:
                state.eta = eta_prop
                state.loglik = ll_prop
            accepts[j] = True
    return state, accepts


def mh_update_sigma2(state, priors, rng):
    """Exact conjugate draw: sigma2 | delta ~ IG(a + m/2, b + delta'delta / 2)."""
    a, b = priors.sigma2_ig
    m = state.delta.shape[0]
    shape = a + 0.5 * m
    scale = b + 0.5 * float(state.delta @ state.delta)
    state.sigma2 = scale / rng.gamma(shape)
    return state


def mh_update_delta_block(state, data, basis, scale, rng):
    """Block Metropolis update of delta with a spherical normal proposal.

    The prior is N(0, sigma2 I); with ``data=None`` the move targets the
    prior alone.
    """
    m = state.delta.shape[0]
    step = scale * rng.standard_normal(m)
    prop = state.delta + step
    log_ratio = (float(state.delta @ state.delta) - float(prop @ prop)) / (2.0 * state.sigma2)
    eta_prop = None
    ll_prop = state.loglik
    if data is not None:
        eta_prop = state.eta + basis @ step
        ll_prop = glmm_loglik_eta(data.response, eta_prop, data.family)
        log_ratio += ll_prop - state.loglik
    accepted = scale == 0.0 or np.log(rng.random()) < log_ratio
    if accepted and scale != 0.0:
        state.delta = prop
        if data is not None:
            state.eta = eta_prop
            state.loglik = ll_prop
    return state, accepted


def _ridge_directions(basis, X):
    """Directions for joint (beta, delta) ridge moves.

    For each direction v in beta space, moving beta by eps*v while subtracting
    eps times the least-squares basis coefficients of Xv from delta changes
    the linear predictor only by the non-representable residual. Directions
    are the eigenvectors of the residual Gram so that fully compensable
    (confounded) combinations separate from data-identified ones.
    """
    coef, *_ = np.linalg.lstsq(basis, X, rcond=None)
    resid = X - basis @ coef
    gram = resid.T @ resid
    _, dirs = np.linalg.eigh(0.5 * (gram + gram.T))
    return coef @ dirs, resid @ dirs, dirs


def _ridge_move(state, data, ridge, scales, priors, rng):
    """Joint (beta, delta) random walk along the confounded directions.

    When a covariate combination is nearly representable in the spatial
    basis, beta and delta trade off along a likelihood ridge that
    coordinatewise moves cross only diffusively. Each proposal here shifts
    beta along a fixed direction while delta absorbs the representable part,
    leaving the linear predictor almost unchanged; the move is a symmetric
    random walk along a fixed line in (beta, delta) space, so the acceptance
    ratio is the posterior ratio (driven by the priors on the flat part).
    """
    coef_d, resid_d, dirs = ridge
    p = state.beta.shape[0]
    accepts = np.zeros(p, dtype=bool)
    for j in range(p):
        eps = scales[j] * rng.standard_normal()
        beta_prop = state.beta + dirs[:, j] * eps
        delta_prop = state.delta - coef_d[:, j] * eps
        eta_prop = state.eta + resid_d[:, j] * eps
        ll_prop = glmm_loglik_eta(data.response, eta_prop, data.family)
        log_ratio = (
            ll_prop
            - state.loglik
            + (float(state.beta @ state.beta) - float(beta_prop @ beta_prop))
            / (2.0 * priors.beta_var)
            + (float(state.delta @ state.delta) - float(delta_prop @ delta_prop))
            / (2.0 * state.sigma2)
        )
        if np.log(rng.random()) < log_ratio:
            state.beta = beta_prop
            state.delta = delta_prop
            state.eta = eta_prop
            state.loglik = ll_prop
            accepts[j] = True
    return state, accepts


def _delta_sweep(state, data, basis, scales, rng):
    """One-variable-at-a-time Metropolis sweep over the delta coordinates."""
    m = state.delta.shape[0]
    steps = scales * rng.standard_normal(m)
    log_us = np.log(rng.random(m))
    z = data.response
    accepts = np.zeros(m, dtype=bool)
    for j in range(m):
        d = steps[j]
        eta_prop = state.eta + basis[:, j] * d
        ll_prop = glmm_loglik_eta(z, eta_prop, data.family)
        log_prior = (state.delta[j] ** 2 - (state.delta[j] + d) ** 2) / (2.0 * state.sigma2)
        if log_us[j] < ll_prop - state.loglik + log_prior:
            state.delta[j] += d
            state.eta = eta_prop
            state.loglik = ll_prop
            accepts[j] = True
    return state, accepts


def mh_update_phi(state, data, X, spec, provider, scale, rng, sketch_seed):
    """Random-walk Metropolis update of phi.

    A move re-approximates the eigencomponents at the proposed range (with the
    supplied sketch seed) and rebuilds the basis; delta is kept fixed across
    the move, so the N(0, sigma2 I) prior on delta cancels in the ratio and
    only the data term and the uniform prior support matter. Proposals outside
    the prior support auto-reject; a failed sketch rejects with a warning.
    """
    lo, hi = spec.priors.phi_range
    prop = state.phi + scale * rng.standard_normal()
    u = rng.random()
    if not lo <= prop <= hi:
        return state, False
    if data is None:
        state.phi = prop
        return state, True
    try:
        eig = provider.eig_for(prop, sketch_seed)
    except Exception as exc:  # noqa: BLE001 - any sketch failure rejects the move
        log.warning("sketch failed at phi=%.4f (%s); proposal rejected", prop, exc)
        return state, False
    b = make_basis(eig, X, spec.restricted).B
    eta_prop = X @ state.beta + b @ state.delta
    ll_prop = glmm_loglik_eta(data.response, eta_prop, data.family)
    if np.log(u) < ll_prop - state.loglik:
        state.phi = prop
        state.eig = eig
        state.basis = b
        state.eta = eta_prop
        state.loglik = ll_prop
        state.sketch_seed = int(sketch_seed)
        return state, True
    return state, False


class _Adapter:
    """Robbins-Monro proposal-scale adaptation, frozen after burn-in."""

    def __init__(self, scales: dict, targets: dict, enabled: bool, window: int = 25):
        self.scales = dict(scales)
        self.targets = targets
        self.enabled = enabled
        self.window = window
        self.counts = {k: [0, 0] for k in scales}
        self.steps = {k: 0 for k in scales}

    def record(self, name, accepted):
        # accepts booleans or fractional (per-sweep) acceptance rates
        acc, tot = self.counts[name]
        self.counts[name] = [acc + float(accepted), tot + 1]

    def maybe_adapt(self, in_burnin: bool):
        if not (self.enabled and in_burnin):
            return
        for name, (acc, tot) in self.counts.items():
            if tot >= self.window:
                self.steps[name] += 1
                rate = acc / tot
                gamma = self.steps[name] ** -0.6
                self.scales[name] *= float(np.exp(gamma * (rate - self.targets[name])))
                self.counts[name] = [0, 0]


def _spawn_rngs(seed: int, k: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(k)]


def _phi_grid(priors: PriorSpec, size: int) -> np.ndarray:
    lo, hi = priors.phi_range
    return np.linspace(lo, hi, size)


def _record_layout(config: McmcConfig):
    burnin = config.effective_burnin
    keep = range(burnin, config.iterations, config.thin)
    return burnin, len(keep)


# ---------------------------------------------------------------------------
# GLMM sampler (poisson, bernoulli-logit; point-referenced or areal)
# ---------------------------------------------------------------------------


def _run_glmm_chain(data: SpatialDataset, spec: ModelSpec, config: McmcConfig) -> Chain:
    t0 = time.perf_counter()
    priors = spec.priors
    n, p, m = data.n, data.p, spec.rank_m
    provider = _make_provider(data, spec)
    mh_rng, init_rng, sketch_rng = _spawn_rngs(config.seed, 3)

    phi_fixed = data.is_areal or config.fix_phi is not None
    grid = None
    grid_seeds = None
    if config.phi_grid and not phi_fixed:
        grid = _phi_grid(priors, config.phi_grid)
        # one shared sketch draw across the grid keeps the basis continuous
        # in phi, so range moves with delta held fixed remain acceptable
        grid_seeds = np.full(grid.shape[0], sketch_rng.integers(0, _SEED_MAX))

    def fresh_seed():
        return int(sketch_rng.integers(0, _SEED_MAX))

    # initial state: over-dispersed starts driven by the init stream
    if phi_fixed:
        phi0 = config.fix_phi if config.fix_phi is not None else np.nan
        grid_idx = -1
    elif grid is not None:
        grid_idx = int(init_rng.integers(0, grid.shape[0]))
        phi0 = float(grid[grid_idx])
    else:
        grid_idx = -1
        phi0 = float(init_rng.uniform(*priors.phi_range))
    seed0 = int(grid_seeds[grid_idx]) if grid is not None else fresh_seed()
    eig0 = provider.eig_for(0.0 if data.is_areal else phi0, seed0)
    basis0 = make_basis(eig0, data.X, spec.restricted).B
    state = ChainState(
        beta=init_rng.normal(0.0, 0.5, p),
        delta=np.zeros(m),
        sigma2=config.fix_sigma2 or float(np.exp(init_rng.normal(0.0, 0.3))),
        phi=phi0,
        eig=eig0,
        basis=basis0,
        sketch_seed=seed0,
    )
    state.eta = data.X @ state.beta + basis0 @ state.delta
    state.loglik = glmm_loglik_eta(data.response, state.eta, data.family)

    ridge_cache: dict[tuple, tuple] = {}

    def ridge_for(phi_key, seed_key, basis):
        key = (round(float(phi_key), 12), int(seed_key))
        hit = ridge_cache.get(key)
        if hit is None:
            hit = _ridge_directions(basis, data.X)
            if len(ridge_cache) < 256:
                ridge_cache[key] = hit
        return hit

    ridge = ridge_for(state.phi if not np.isnan(state.phi) else 0.0, seed0, basis0)

    adapter = _Adapter(
        config.scales,
        {"beta": 0.44, "delta": 0.234, "phi": 0.44, "sigma2": 0.44, "tau2": 0.44},
        config.adapt,
    )
    grid_width = max(1, (grid.shape[0] // 10) if grid is not None else 1)

    # per-coordinate proposal scales for the one-variable-at-a-time delta
    # sweep; the conditional spread of delta_j varies with the eigenvalue
    delta_scales = np.full(m, config.scales["delta"])
    delta_acc = np.zeros(m)
    delta_windows = 0
    ridge_scales = np.full(p, 0.5)
    ridge_acc = np.zeros(p)
    ridge_windows = 0

    burnin, n_keep = _record_layout(config)
    out = {
        "beta": np.empty((n_keep, p)),
        "delta": np.empty((n_keep, m)),
        "sigma2": np.empty(n_keep),
        "phi": np.full(n_keep, np.nan),
        "loglik": np.empty(n_keep),
        "sketch_seed": np.empty(n_keep, dtype=np.int64),
    }
    eta_sum = np.zeros(n)
    acc_counts = {"beta": [0, 0], "delta": [0, 0], "phi": [0, 0]}
    kept = 0

    for t in range(config.iterations):
        in_burnin = t < burnin
        state, acc_b = mh_update_beta(
            state, data, state.basis, priors, adapter.scales["beta"], mh_rng
        )
        for a in acc_b:
            adapter.record("beta", a)
            if not in_burnin:
                acc_counts["beta"][0] += a
                acc_counts["beta"][1] += 1

        state, acc_r = _ridge_move(state, data, ridge, ridge_scales, priors, mh_rng)
        ridge_acc += acc_r

        if config.delta_block:
            state, acc_d = mh_update_delta_block(
                state, data, state.basis, adapter.scales["delta"], mh_rng
            )
            adapter.record("delta", acc_d)
            acc_d_frac = float(acc_d)
        else:
            state, acc_vec = _delta_sweep(state, data, state.basis, delta_scales, mh_rng)
            delta_acc += acc_vec
            acc_d_frac = float(acc_vec.mean())
        if config.adapt and in_burnin and (t + 1) % 25 == 0:
            delta_windows += 1
            gamma = delta_windows**-0.6
            if not config.delta_block:
                delta_scales *= np.exp(gamma * (delta_acc / 25.0 - 0.44))
            ridge_scales *= np.exp(gamma * (ridge_acc / 25.0 - 0.44))
            delta_acc[:] = 0.0
            ridge_acc[:] = 0.0
        if not in_burnin:
            acc_counts["delta"][0] += acc_d_frac
            acc_counts["delta"][1] += 1

        if config.fix_sigma2 is None:
            state = mh_update_sigma2(state, priors, mh_rng)

        if not phi_fixed:
            if grid is not None:
                step = int(mh_rng.integers(-grid_width, grid_width + 1))
                u = mh_rng.random()
                acc_p = False
                j = grid_idx + step
                if step != 0 and 0 <= j < grid.shape[0]:
                    eig_p = provider.eig_for(float(grid[j]), int(grid_seeds[j]))
                    b_p = make_basis(eig_p, data.X, spec.restricted).B
                    eta_p = data.X @ state.beta + b_p @ state.delta
                    ll_p = glmm_loglik_eta(data.response, eta_p, data.family)
                    if np.log(u) < ll_p - state.loglik:
                        grid_idx = j
                        state.phi = float(grid[j])
                        state.eig, state.basis = eig_p, b_p
                        state.eta, state.loglik = eta_p, ll_p
                        state.sketch_seed = int(grid_seeds[j])
                        ridge = ridge_for(state.phi, state.sketch_seed, state.basis)
                        acc_p = True
            else:
                seed_p = fresh_seed() if config.resketch else state.sketch_seed
                state, acc_p = mh_update_phi(
                    state, data, data.X, spec, provider, adapter.scales["phi"], mh_rng, seed_p
                )
                if acc_p:
                    ridge = ridge_for(state.phi, state.sketch_seed, state.basis)
            adapter.record("phi", acc_p)
            if not in_burnin:
                acc_counts["phi"][0] += acc_p
                acc_counts["phi"][1] += 1

        adapter.maybe_adapt(in_burnin)

        if t >= burnin and (t - burnin) % config.thin == 0:
            out["beta"][kept] = state.beta
            out["delta"][kept] = state.delta
            out["sigma2"][kept] = state.sigma2
            out["phi"][kept] = state.phi
            out["loglik"][kept] = state.loglik
            out["sketch_seed"][kept] = state.sketch_seed
            eta_sum += state.eta
            kept += 1

    acceptance = {
        k: (v[0] / v[1] if v[1] else np.nan) for k, v in acc_counts.items()
    }
    return Chain(
        samples=out,
        acceptance=acceptance,
        seed=config.seed,
        model=spec,
        config=config,
        family=data.family,
        provider=provider,
        extras={
            "eta_mean": eta_sum / max(kept, 1),
            "wall_time": time.perf_counter() - t0,
            "final_scales": dict(adapter.scales),
        },
    )


# ---------------------------------------------------------------------------
# linear (gaussian) sampler against the fast marginal likelihood
# ---------------------------------------------------------------------------


def _ig_logpdf(x: float, ab: tuple[float, float]) -> float:
    a, b = ab
    return -(a + 1.0) * np.log(x) - b / x


def _run_linear_chain(data: SpatialDataset, spec: ModelSpec, config: McmcConfig) -> Chain:
    t0 = time.perf_counter()
    priors = spec.priors
    n, p, m = data.n, data.p, spec.rank_m
    Y = data.response
    provider = _make_provider(data, spec)
    mh_rng, init_rng, sketch_rng = _spawn_rngs(config.seed, 3)

    phi_fixed = data.is_areal or config.fix_phi is not None
    grid = None
    grid_seeds = None
    if config.phi_grid and not phi_fixed:
        grid = _phi_grid(priors, config.phi_grid)
        # one shared sketch draw across the grid keeps the basis continuous
        # in phi, so range moves with delta held fixed remain acceptable
        grid_seeds = np.full(grid.shape[0], sketch_rng.integers(0, _SEED_MAX))

    def fresh_seed():
        return int(sketch_rng.integers(0, _SEED_MAX))

    marg_cache: dict[tuple, LinearMarginal] = {}

    def marginal_for(phi: float, seed: int) -> LinearMarginal:
        key = (round(float(phi), 12), int(seed))
        hit = marg_cache.get(key)
        if hit is None:
            eig = provider.eig_for(0.0 if data.is_areal else phi, seed)
            hit = LinearMarginal(Y, data.X, make_basis(eig, data.X, spec.restricted))
            if len(marg_cache) < 256:
                marg_cache[key] = hit
        return hit

    if phi_fixed:
        phi = config.fix_phi if config.fix_phi is not None else np.nan
        grid_idx = -1
        seed = fresh_seed()
    elif grid is not None:
        grid_idx = int(init_rng.integers(0, grid.shape[0]))
        phi = float(grid[grid_idx])
        seed = int(grid_seeds[grid_idx])
    else:
        grid_idx = -1
        phi = float(init_rng.uniform(*priors.phi_range))
        seed = fresh_seed()
    marg = marginal_for(phi, seed)
    beta = init_rng.normal(0.0, 0.5, p)
    sigma2 = float(np.exp(init_rng.normal(0.0, 0.3)))
    tau2 = float(np.exp(init_rng.normal(-1.0, 0.3)))
    ll = marg.loglik(beta, sigma2, tau2)

    adapter = _Adapter(
        config.scales,
        {"beta": 0.44, "delta": 0.234, "phi": 0.44, "sigma2": 0.44, "tau2": 0.44},
        config.adapt,
    )
    grid_width = max(1, (grid.shape[0] // 10) if grid is not None else 1)

    burnin, n_keep = _record_layout(config)
    out = {
        "beta": np.empty((n_keep, p)),
        "delta": np.empty((n_keep, m)),
        "sigma2": np.empty(n_keep),
        "tau2": np.empty(n_keep),
        "phi": np.full(n_keep, np.nan),
        "loglik": np.empty(n_keep),
        "sketch_seed": np.empty(n_keep, dtype=np.int64),
    }
    acc_counts = {"sigma2": [0, 0], "tau2": [0, 0], "phi": [0, 0]}
    kept = 0

    def gibbs_beta():
        nonlocal beta, ll
        sinv_x = marg.sigma_inv_dot(data.X, sigma2, tau2)
        prec = data.X.T @ sinv_x
        prec[np.diag_indices_from(prec)] += 1.0 / priors.beta_var
        rhs = sinv_x.T @ Y
        cf = cho_factor(prec, lower=True)
        mean = cho_solve(cf, rhs)
        z = mh_rng.standard_normal(p)
        # draw = mean + L^{-T} z has covariance prec^{-1}
        beta = mean + solve_triangular(cf[0].T, z, lower=False)
        ll = marg.loglik(beta, sigma2, tau2)

    def mh_logscale(name, value, logprior_ab):
        nonlocal ll
        scale = adapter.scales[name]
        prop = value * float(np.exp(scale * mh_rng.standard_normal()))
        ll_prop = marg.loglik(beta, prop if name == "sigma2" else sigma2,
                              prop if name == "tau2" else tau2)
        log_ratio = (
            ll_prop
            - ll
            + _ig_logpdf(prop, logprior_ab)
            - _ig_logpdf(value, logprior_ab)
            + np.log(prop)
            - np.log(value)
        )
        accepted = np.log(mh_rng.random()) < log_ratio
        if accepted:
            ll = ll_prop
            return prop, True
        return value, False

    for t in range(config.iterations):
        in_burnin = t < burnin
        gibbs_beta()

        if config.fix_sigma2 is None:
            sigma2, acc = mh_logscale("sigma2", sigma2, priors.sigma2_ig)
            adapter.record("sigma2", acc)
            if not in_burnin:
                acc_counts["sigma2"][0] += acc
                acc_counts["sigma2"][1] += 1

        tau2, acc = mh_logscale("tau2", tau2, priors.tau2_ig)
        adapter.record("tau2", acc)
        if not in_burnin:
            acc_counts["tau2"][0] += acc
            acc_counts["tau2"][1] += 1

        if not phi_fixed:
            acc_p = False
            if grid is not None:
                step = int(mh_rng.integers(-grid_width, grid_width + 1))
                u = mh_rng.random()
                j = grid_idx + step
                if step != 0 and 0 <= j < grid.shape[0]:
                    marg_p = marginal_for(float(grid[j]), int(grid_seeds[j]))
                    ll_p = marg_p.loglik(beta, sigma2, tau2)
                    if np.log(u) < ll_p - ll:
                        grid_idx, phi, seed = j, float(grid[j]), int(grid_seeds[j])
                        marg, ll = marg_p, ll_p
                        acc_p = True
            else:
                prop = phi + adapter.scales["phi"] * mh_rng.standard_normal()
                u = mh_rng.random()
                lo, hi = priors.phi_range
                if lo <= prop <= hi:
                    seed_p = fresh_seed() if config.resketch else seed
                    marg_p = marginal_for(prop, seed_p)
                    ll_p = marg_p.loglik(beta, sigma2, tau2)
                    if np.log(u) < ll_p - ll:
                        phi, seed, marg, ll = float(prop), seed_p, marg_p, ll_p
                        acc_p = True
            adapter.record("phi", acc_p)
            if not in_burnin:
                acc_counts["phi"][0] += acc_p
                acc_counts["phi"][1] += 1

        adapter.maybe_adapt(in_burnin)

        if t >= burnin and (t - burnin) % config.thin == 0:
            # compositional draw of delta from its exact Gaussian conditional
            btr = marg.BtY - marg.BtX @ beta
            prec_d = marg.BtB / tau2
            prec_d = np.diag(np.diag(prec_d)) if not spec.restricted else prec_d.copy()
            prec_d[np.diag_indices_from(prec_d)] += 1.0 / sigma2
            cf_d = cho_factor(prec_d, lower=True)
            mean_d = cho_solve(cf_d, btr / tau2)
            delta = mean_d + solve_triangular(cf_d[0].T, mh_rng.standard_normal(m), lower=False)
            out["beta"][kept] = beta
            out["delta"][kept] = delta
            out["sigma2"][kept] = sigma2
            out["tau2"][kept] = tau2
            out["phi"][kept] = phi
            out["loglik"][kept] = ll
            out["sketch_seed"][kept] = seed
            kept += 1

    acceptance = {k: (v[0] / v[1] if v[1] else np.nan) for k, v in acc_counts.items()}
    return Chain(
        samples=out,
        acceptance=acceptance,
        seed=config.seed,
        model=spec,
        config=config,
        family=data.family,
        provider=provider,
        extras={"wall_time": time.perf_counter() - t0, "final_scales": dict(adapter.scales)},
    )


# ---------------------------------------------------------------------------
# probit Gibbs sampler (latent truncated-normal scheme)
# ---------------------------------------------------------------------------


def probit_gibbs_chain(data: SpatialDataset, spec: ModelSpec, config: McmcConfig) -> Chain:
    """Gibbs sampler for the binary probit model with a nugget.

    Latent responses are drawn from one-sided truncated normals, the joint
    coefficient vector (beta, delta) from its conjugate normal conditional
    with block-diagonal prior diag(beta_var I, sigma2 I), tau2 and sigma2 from
    inverse gammas, and phi by a random walk against the latent Gaussian
    likelihood.
    """
    if data.family != "bernoulli-probit":
        raise ValueError("probit_gibbs_chain requires the bernoulli-probit family")
    spec.validate_for(data)
    t0 = time.perf_counter()
    priors = spec.priors
    n, p, m = data.n, data.p, spec.rank_m
    z = data.response
    provider = _make_provider(data, spec)
    mh_rng, init_rng, sketch_rng = _spawn_rngs(config.seed, 3)

    phi_fixed = data.is_areal or config.fix_phi is not None
    grid = None
    grid_seeds = None
    if config.phi_grid and not phi_fixed:
        grid = _phi_grid(priors, config.phi_grid)
        # one shared sketch draw across the grid keeps the basis continuous
        # in phi, so range moves with delta held fixed remain acceptable
        grid_seeds = np.full(grid.shape[0], sketch_rng.integers(0, _SEED_MAX))

    def fresh_seed():
        return int(sketch_rng.integers(0, _SEED_MAX))

    design_cache: dict[tuple, tuple] = {}

    def design_for(phi: float, seed: int):
        """[X, B] and its Gram matrix for a given basis."""
        key = (round(float(phi), 12), int(seed))
        hit = design_cache.get(key)
        if hit is None:
            eig = provider.eig_for(0.0 if data.is_areal else phi, seed)
            b = make_basis(eig, data.X, spec.restricted).B
            xphi = np.hstack([data.X, b])
            hit = (xphi, xphi.T @ xphi)
            if len(design_cache) < 256:
                design_cache[key] = hit
        return hit

    if phi_fixed:
        phi = config.fix_phi if config.fix_phi is not None else np.nan
        grid_idx = -1
        seed = fresh_seed()
    elif grid is not None:
        grid_idx = int(init_rng.integers(0, grid.shape[0]))
        phi = float(grid[grid_idx])
        seed = int(grid_seeds[grid_idx])
    else:
        grid_idx = -1
        phi = float(init_rng.uniform(*priors.phi_range))
        seed = fresh_seed()
    xphi, gram = design_for(phi, seed)
    coef = np.concatenate([init_rng.normal(0.0, 0.5, p), np.zeros(m)])
    sigma2 = float(np.exp(init_rng.normal(0.0, 0.3)))
    tau2 = float(np.exp(init_rng.normal(0.0, 0.3)))

    grid_width = max(1, (grid.shape[0] // 10) if grid is not None else 1)
    burnin, n_keep = _record_layout(config)
    out = {
        "beta": np.empty((n_keep, p)),
        "delta": np.empty((n_keep, m)),
        "sigma2": np.empty(n_keep),
        "tau2": np.empty(n_keep),
        "phi": np.full(n_keep, np.nan),
        "loglik": np.empty(n_keep),
        "sketch_seed": np.empty(n_keep, dtype=np.int64),
    }
    latents = np.empty((n_keep, n)) if config.store_latent else None
    zscore_sum = np.zeros(n)
    acc_counts = {"phi": [0, 0]}
    truncation_violations = 0
    kept = 0
    pos = z == 1.0

    lower = np.where(pos, 0.0, -np.inf)
    upper = np.where(pos, np.inf, 0.0)

    for t in range(config.iterations):
        # step 1: latent truncated-normal draws
        mu = xphi @ coef
        tau = np.sqrt(tau2)
        latent = truncnorm.rvs(
            (lower - mu) / tau, (upper - mu) / tau, loc=mu, scale=tau, random_state=mh_rng
        )
        truncation_violations += int(np.sum(pos & (latent < 0)) + np.sum(~pos & (latent >= 0)))

        # step 2: joint Gibbs draw of (beta, delta)
        prec = gram / tau2
        prior_diag = np.concatenate(
            [np.full(p, 1.0 / priors.beta_var), np.full(m, 1.0 / sigma2)]
        )
        prec[np.diag_indices_from(prec)] += prior_diag
        cf = cho_factor(prec, lower=True)
        mean = cho_solve(cf, xphi.T @ latent / tau2)
        coef = mean + solve_triangular(cf[0].T, mh_rng.standard_normal(p + m), lower=False)

        # step 3: tau2 | ...
        resid = latent - xphi @ coef
        a_t, b_t = priors.tau2_ig
        tau2 = (b_t + 0.5 * float(resid @ resid)) / mh_rng.gamma(a_t + 0.5 * n)

        # step 4: sigma2 | delta
        delta = coef[p:]
        a_s, b_s = priors.sigma2_ig
        sigma2 = (b_s + 0.5 * float(delta @ delta)) / mh_rng.gamma(a_s + 0.5 * m)

        # step 5: phi | ... against the latent Gaussian likelihood
        if not phi_fixed:
            acc_p = False

            def latent_ll(design):
                r = latent - design @ coef
                return -0.5 * float(r @ r) / tau2

            if grid is not None:
                step = int(mh_rng.integers(-grid_width, grid_width + 1))
                u = mh_rng.random()
                j = grid_idx + step
                if step != 0 and 0 <= j < grid.shape[0]:
                    xphi_p, gram_p = design_for(float(grid[j]), int(grid_seeds[j]))
                    if np.log(u) < latent_ll(xphi_p) - latent_ll(xphi):
                        grid_idx, phi, seed = j, float(grid[j]), int(grid_seeds[j])
                        xphi, gram = xphi_p, gram_p
                        acc_p = True
            else:
                prop = phi + config.scales["phi"] * mh_rng.standard_normal()
                u = mh_rng.random()
                lo, hi = priors.phi_range
                if lo <= prop <= hi:
                    seed_p = fresh_seed() if config.resketch else seed
                    xphi_p, gram_p = design_for(float(prop), seed_p)
                    if np.log(u) < latent_ll(xphi_p) - latent_ll(xphi):
                        phi, seed, xphi, gram = float(prop), seed_p, xphi_p, gram_p
                        acc_p = True
            acc_counts["phi"][0] += acc_p
            acc_counts["phi"][1] += 1

        if t >= burnin and (t - burnin) % config.thin == 0:
            eta = xphi @ coef
            zsc = eta / np.sqrt(tau2)
            prob = norm.cdf(zsc)
            prob = np.clip(prob, 1e-12, 1.0 - 1e-12)
            out["beta"][kept] = coef[:p]
            out["delta"][kept] = delta
            out["sigma2"][kept] = sigma2
            out["tau2"][kept] = tau2
            out["phi"][kept] = phi
            out["loglik"][kept] = float(np.sum(np.where(pos, np.log(prob), np.log1p(-prob))))
            out["sketch_seed"][kept] = seed
            if latents is not None:
                latents[kept] = latent
            zscore_sum += zsc
            kept += 1

    acceptance = {k: (v[0] / v[1] if v[1] else np.nan) for k, v in acc_counts.items()}
    extras = {
        "truncation_violations": truncation_violations,
        "zscore_mean": zscore_sum / max(kept, 1),
        "wall_time": time.perf_counter() - t0,
    }
    if latents is not None:
        extras["latent"] = latents
    return Chain(
        samples=out,
        acceptance=acceptance,
        seed=config.seed,
        model=spec,
        config=config,
        family=data.family,
        provider=provider,
        extras=extras,
    )


def run_chain(data: SpatialDataset, spec: ModelSpec, config: McmcConfig) -> Chain:
    """Fit one chain, dispatching on the response family."""
    spec.validate_for(data)
    if data.family == "gaussian":
        return _run_linear_chain(data, spec, config)
    if data.family == "bernoulli-probit":
        return probit_gibbs_chain(data, spec, config)
    return _run_glmm_chain(data, spec, config)


def run_chains(data: SpatialDataset, spec: ModelSpec, config: McmcConfig) -> list[Chain]:
    """Run config.n_chains independent chains with spawned seeds."""
    seeds = np.random.SeedSequence(config.seed).generate_state(config.n_chains)
    return [run_chain(data, spec, config.with_seed(int(s))) for s in seeds]


# ---------------------------------------------------------------------------
# posterior adjustment, prediction
# ---------------------------------------------------------------------------


def _basis_groups(chain: Chain):
    """Iterate over retained samples grouped by their (phi, sketch seed) basis."""
    phis = chain.samples["phi"]
    seeds = chain.samples["sketch_seed"]
    keys = {}
    for i in range(phis.shape[0]):
        keys.setdefault((phis[i] if np.isfinite(phis[i]) else 0.0, int(seeds[i])), []).append(i)
    for (phi, seed), idx in keys.items():
        yield phi, seed, np.asarray(idx, dtype=int)


def posterior_adjust(chain: Chain, X: np.ndarray) -> np.ndarray:
    """A-posteriori confounding adjustment of a restricted chain.

    For every retained sample the implied spatial effect W is rebuilt from the
    UNPROJECTED basis at that sample's range parameter, and the regression
    coefficient is corrected by the least-squares projection of W onto X.
    Returns the adjusted beta sample path.
    """
    if not chain.model.restricted:
        raise ValueError("posterior adjustment applies to restricted (RRP) chains only")
    proj = OrthoProjector(np.asarray(X, dtype=float))
    betas = chain.samples["beta"].copy()
    deltas = chain.samples["delta"]
    for phi, seed, idx in _basis_groups(chain):
        eig = chain.provider.eig_for(phi, seed)
        w = eig.basis() @ deltas[idx].T  # (n, |idx|)
        betas[idx] -= proj.coef(w).T
    return betas


@dataclass
class PredictionResult:
    """Posterior summaries of the mean response at new sites."""

    locations: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    obs_lower: np.ndarray | None = None
    obs_upper: np.ndarray | None = None


def predict(
    chain: Chain,
    new_locations,
    data: SpatialDataset,
    new_X: np.ndarray | None = None,
    seed: int = 0,
) -> PredictionResult:
    """Posterior predictive summaries of the mean response at new sites.

    Eigenvectors are extended out of sample by the Nystrom rule
    b*(s) = r*(s)' U D^{-1/2}, consistent with the fitted basis. Restricted
    chains predict through the adjusted coefficients, which reproduces the
    full-model surface identity X beta_adj + W = X beta_restricted + P_perp W.
    """
    if data.is_areal:
        new_locations = np.asarray(new_locations, dtype=int).ravel()
        if new_X is None:
            new_X = data.X[new_locations]
        n_new = new_locations.shape[0]
    else:
        new_locations = np.atleast_2d(np.asarray(new_locations, dtype=float))
        if new_X is None:
            if data.p == new_locations.shape[1]:
                new_X = new_locations
            else:
                raise ValueError("covariates for the new sites are required")
        n_new = new_locations.shape[0]
    new_X = np.atleast_2d(np.asarray(new_X, dtype=float))
    if new_X.shape != (n_new, data.p):
        raise ValueError(f"new_X must be ({n_new}, {data.p}), got {new_X.shape}")

    betas = (
        posterior_adjust(chain, data.X) if chain.model.restricted else chain.samples["beta"]
    )
    deltas = chain.samples["delta"]
    n_s = betas.shape[0]
    eta_star = np.empty((n_new, n_s))
    for phi, sk_seed, idx in _basis_groups(chain):
        eig = chain.provider.eig_for(phi, sk_seed)
        b_star = chain.provider.cross_basis(new_locations, eig)
        eta_star[:, idx] = new_X @ betas[idx].T + b_star @ deltas[idx].T

    family = chain.family
    if family == "gaussian":
        mean_resp = eta_star
    elif family == "poisson":
        mean_resp = np.exp(np.clip(eta_star, None, 700.0))
    elif family == "bernoulli-logit":
        mean_resp = expit(eta_star)
    elif family == "bernoulli-probit":
        tau = np.sqrt(chain.samples["tau2"])
        mean_resp = norm.cdf(eta_star / tau[None, :])
    else:  # pragma: no cover
        raise ValueError(f"unknown family {family!r}")

    result = PredictionResult(
        locations=new_locations,
        mean=mean_resp.mean(axis=1),
        lower=np.quantile(mean_resp, 0.025, axis=1),
        upper=np.quantile(mean_resp, 0.975, axis=1),
    )
    if family == "gaussian":
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(eta_star.shape) * np.sqrt(chain.samples["tau2"])[None, :]
        obs = eta_star + noise
        result.obs_lower = np.quantile(obs, 0.025, axis=1)
        result.obs_upper = np.quantile(obs, 0.975, axis=1)
    return result


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def ess(sample_path) -> float:
    """Effective sample size by Geyer's initial monotone sequence estimator.

    The asymptotic variance is built from sums of adjacent autocovariance
    pairs, truncated at the first nonpositive pair and forced nonincreasing;
    ESS = N * var / asymptotic_var, capped at N. A constant path has no
    information and reports 0 (with a warning).
    """
    x = np.asarray(sample_path, dtype=float).ravel()
    n = x.shape[0]
    if n < 100:
        raise ValueError("need at least 100 samples to estimate ESS")
    x = x - x.mean()
    c0 = float(x @ x) / n
    if c0 == 0.0:
        warnings.warn("constant chain: ESS undefined, reporting 0", RuntimeWarning, stacklevel=2)
        return 0.0
    nfft = int(2 ** np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n].real / n
    pair_sums = []
    for k in range(0, n - 1, 2):
        s = acov[k] + acov[k + 1]
        if s <= 0:
            break
        pair_sums.append(s)
    if not pair_sums:
        return float(n)
    pair_sums = np.minimum.accumulate(pair_sums)
    asymp = -acov[0] + 2.0 * float(np.sum(pair_sums))
    if asymp <= 0:
        asymp = acov[0]
    return float(min(n, n * acov[0] / asymp))


def batch_means_se(sample_path) -> float:
    """Batch-means Monte Carlo standard error of the sample mean."""
    x = np.asarray(sample_path, dtype=float).ravel()
    n = x.shape[0]
    b = max(1, int(np.floor(np.sqrt(n))))
    a = n // b
    if a < 2:
        return float("inf")
    means = x[: a * b].reshape(a, b).mean(axis=1)
    var_bm = b * float(np.var(means, ddof=1))
    return float(np.sqrt(var_bm / (a * b)))


def _named_paths(chain: Chain) -> dict:
    paths = {}
    for j in range(chain.samples["beta"].shape[1]):
        paths[f"beta_{j + 1}"] = chain.samples["beta"][:, j]
    paths["sigma2"] = chain.samples["sigma2"]
    if "tau2" in chain.samples:
        paths["tau2"] = chain.samples["tau2"]
    if np.isfinite(chain.samples["phi"]).all():
        paths["phi"] = chain.samples["phi"]
    return paths


def mcmc_se_check(chain: Chain, threshold: float = 0.02) -> dict:
    """Batch-means SE of each posterior mean, compared against a threshold.

    A parameter passes only when its SE is strictly below the threshold.
    """
    results = {}
    for name, path in _named_paths(chain).items():
        se = batch_means_se(path)
        results[name] = {"se": se, "ok": bool(se < threshold)}
    return results


def summarize_chain(chain: Chain, adjusted_beta: np.ndarray | None = None) -> dict:
    """Per-parameter posterior summaries; pass adjusted betas for A-RRP output."""
    paths = _named_paths(chain)
    if adjusted_beta is not None:
        for j in range(adjusted_beta.shape[1]):
            paths[f"beta_{j + 1}"] = adjusted_beta[:, j]
    out = {}
    for name, x in paths.items():
        variable = float(np.var(x)) > 0
        out[name] = PosteriorSummary(
            mean=float(np.mean(x)),
            ci_lower=float(np.quantile(x, 0.025)),
            ci_upper=float(np.quantile(x, 0.975)),
            ess=ess(x) if x.shape[0] >= 100 and variable else 0.0,
            mcse=batch_means_se(x),
            adjusted=adjusted_beta is not None and name.startswith("beta"),
        )
    return out


def _mean_linear_predictor(chain: Chain, data: SpatialDataset, standardized: bool) -> np.ndarray:
    """Posterior mean of eta (probit: of eta / tau), rebuilt from the samples."""
    betas = chain.samples["beta"]
    deltas = chain.samples["delta"]
    total = np.zeros(data.n)
    for phi, seed, idx in _basis_groups(chain):
        eig = chain.provider.eig_for(phi, seed)
        b = make_basis(eig, data.X, chain.model.restricted).B
        eta = data.X @ betas[idx].T + b @ deltas[idx].T
        if standardized:
            eta = eta / np.sqrt(chain.samples["tau2"][idx])[None, :]
        total += eta.sum(axis=1)
    return total / betas.shape[0]


def dic(chain: Chain, data: SpatialDataset) -> float:
    """Deviance information criterion DIC = mean deviance + p_D.

    Non-Gaussian families use the conditional deviance given the linear
    predictor; the plug-in deviance is evaluated at the posterior mean linear
    predictor (probit: mean latent z-score). The gaussian family uses the
    marginal deviance with plug-in posterior means of (beta, sigma2, tau2,
    phi).
    """
    d_bar = -2.0 * float(np.mean(chain.samples["loglik"]))
    if chain.family == "gaussian":
        phi_bar = float(np.nanmean(chain.samples["phi"]))
        seed = int(chain.samples["sketch_seed"][0])
        eig = chain.provider.eig_for(phi_bar if np.isfinite(phi_bar) else 0.0, seed)
        marg = LinearMarginal(
            data.response, data.X, make_basis(eig, data.X, chain.model.restricted)
        )
        d_hat = -2.0 * marg.loglik(
            chain.samples["beta"].mean(axis=0),
            float(chain.samples["sigma2"].mean()),
            float(chain.samples["tau2"].mean()),
        )
    elif chain.family == "bernoulli-probit":
        zsc = chain.extras.get("zscore_mean")
        if zsc is None:
            zsc = _mean_linear_predictor(chain, data, standardized=True)
        prob = np.clip(norm.cdf(zsc), 1e-12, 1.0 - 1e-12)
        pos = data.response == 1.0
        d_hat = -2.0 * float(np.sum(np.where(pos, np.log(prob), np.log1p(-prob))))
    else:
        eta_mean = chain.extras.get("eta_mean")
        if eta_mean is None:
            eta_mean = _mean_linear_predictor(chain, data, standardized=False)
        d_hat = -2.0 * glmm_loglik_eta(data.response, eta_mean, chain.family)
    p_d = d_bar - d_hat
    return d_bar + p_d


# ---------------------------------------------------------------------------
# reference sampler for the mixing comparison
# ---------------------------------------------------------------------------


def baseline_full_w_chain(
    data: SpatialDataset,
    sigma2: float,
    phi: float,
    nu: float,
    config: McmcConfig,
) -> Chain:
    """One-variable-at-a-time sampler on the full n-dimensional random effect.

    This is the classical (unreduced) sampler used as the mixing baseline:
    each W_i gets its own random-walk Metropolis update against the Poisson /
    logit likelihood and the MVN(0, sigma2 R(phi)) prior, with (sigma2, phi)
    held fixed. Returned samples store W in place of delta.
    """
    if data.is_areal:
        raise ValueError("baseline sampler supports point-referenced data only")
    t0 = time.perf_counter()
    n, p = data.n, data.p
    priors = PriorSpec()
    r = matern_corr(squareform(pdist(data.locations)), phi, nu)
    np.fill_diagonal(r, 1.0)
    prec = np.linalg.inv(sigma2 * r + 1e-8 * np.eye(n))
    mh_rng, init_rng, _ = _spawn_rngs(config.seed, 3)

    beta = init_rng.normal(0.0, 0.5, p)
    w = np.zeros(n)
    prec_w = prec @ w  # kept in sync with single-site moves
    eta = data.X @ beta + w
    ll = glmm_loglik_eta(data.response, eta, data.family)

    adapter = _Adapter({"beta": 0.3, "w": 0.5}, {"beta": 0.44, "w": 0.44}, config.adapt)
    burnin, n_keep = _record_layout(config)
    out_beta = np.empty((n_keep, p))
    out_w = np.empty((n_keep, n))
    acc_w = [0, 0]
    kept = 0
    z = data.response

    for t in range(config.iterations):
        in_burnin = t < burnin
        state = ChainState(beta=beta, delta=w, sigma2=sigma2, phi=phi, eta=eta, loglik=ll)
        state, _acc = mh_update_beta(state, data, None, priors, adapter.scales["beta"], mh_rng)
        beta, eta, ll = state.beta, state.eta, state.loglik
        for a in _acc:
            adapter.record("beta", a)

        scale_w = adapter.scales["w"]
        steps = scale_w * mh_rng.standard_normal(n)
        log_us = np.log(mh_rng.random(n))
        acc_site = 0
        for i in range(n):
            d = steps[i]
            eta_i = eta[i] + d
            if data.family == "poisson":
                dll = z[i] * d - (np.exp(eta_i) - np.exp(eta[i]))
            else:
                dll = z[i] * d - (np.logaddexp(0.0, eta_i) - np.logaddexp(0.0, eta[i]))
            dprior = -(d * prec_w[i] + 0.5 * d * d * prec[i, i])
            if log_us[i] < dll + dprior:
                w[i] += d
                eta[i] = eta_i
                ll += dll
                prec_w += d * prec[:, i]
                acc_site += 1
        adapter.record("w", acc_site / n)
        if not in_burnin:
            acc_w[0] += acc_site
            acc_w[1] += n
        adapter.maybe_adapt(in_burnin)

        if t >= burnin and (t - burnin) % config.thin == 0:
            out_beta[kept] = beta
            out_w[kept] = w
            kept += 1

    samples = {
        "beta": out_beta,
        "delta": out_w,
        "sigma2": np.full(n_keep, sigma2),
        "phi": np.full(n_keep, phi),
        "loglik": np.zeros(n_keep),
        "sketch_seed": np.zeros(n_keep, dtype=np.int64),
    }
    spec = ModelSpec(restricted=False, rank_m=n, sketch=SketchConfig(rank_m=n, oversample_l=0))
    return Chain(
        samples=samples,
        acceptance={"w": acc_w[0] / max(acc_w[1], 1)},
        seed=config.seed,
        model=spec,
        config=config,
        family=data.family,
        provider=BasisProvider(kind="matern", sketch=spec.sketch, nu=nu, locations=data.locations),
        extras={"wall_time": time.perf_counter() - t0},
    )
