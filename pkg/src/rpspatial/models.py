"""Model definitions: datasets, priors, reduced-rank model specs, and the FRP /
RRP likelihoods (fast low-rank Gaussian marginal and conditional GLMM).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, qr, solve_triangular
from scipy.special import gammaln

from .covariance import ArealGraph, as_locations
from .randproj import EigenApprox, SketchConfig

__all__ = [
    "FAMILIES",
    "SpatialDataset",
    "PriorSpec",
    "ModelSpec",
    "LinearPredictorBasis",
    "OrthoProjector",
    "ortho_complement_apply",
    "make_basis",
    "glmm_loglik",
    "glmm_loglik_eta",
    "linear_marginal_loglik",
    "reconstruct_w",
]

log = logging.getLogger(__name__)

FAMILIES = ("gaussian", "poisson", "bernoulli-logit", "bernoulli-probit")

# Linear predictors beyond this blow up exp() in double precision; such
# proposals are treated as rejected rather than crashing the chain.
ETA_OVERFLOW = 700.0


@dataclass
class SpatialDataset:
    """Observed spatial data: covariates, response, and either point locations
    or an areal neighborhood graph."""

    X: np.ndarray
    response: np.ndarray
    family: str
    locations: np.ndarray | None = None
    graph: ArealGraph | None = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.response = np.asarray(self.response, dtype=float).ravel()
        n = self.response.shape[0]
        if self.X.shape[0] != n:
            raise ValueError(f"X has {self.X.shape[0]} rows but response has {n}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if (self.locations is None) == (self.graph is None):
            raise ValueError("exactly one of locations / graph must be given")
        if self.locations is not None:
            self.locations = as_locations(self.locations)
            if self.locations.shape[0] != n:
                raise ValueError("locations and response disagree on n")
        else:
            if self.graph.n != n:
                raise ValueError("areal graph and response disagree on n")
        if np.linalg.matrix_rank(self.X) < self.X.shape[1]:
            raise ValueError("covariate matrix X is rank deficient")
        if self.family == "poisson":
            z = self.response
            if np.any(z < 0) or np.any(z != np.round(z)):
                raise ValueError("poisson responses must be nonnegative integers")
        if self.family.startswith("bernoulli"):
            if not np.isin(self.response, (0.0, 1.0)).all():
                raise ValueError("binary responses must lie in {0, 1}")

    @property
    def n(self) -> int:
        return self.response.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def is_areal(self) -> bool:
        return self.graph is not None


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters: N(0, beta_var I) on beta, inverse-gamma on the variances,
    uniform on the range."""

    beta_var: float = 100.0
    sigma2_ig: tuple[float, float] = (2.0, 2.0)
    tau2_ig: tuple[float, float] = (2.0, 1.0)
    phi_range: tuple[float, float] = (0.01, 1.5)

    def __post_init__(self):
        if self.beta_var <= 0 or min(self.sigma2_ig) <= 0 or min(self.tau2_ig) <= 0:
            raise ValueError("prior hyperparameters must be positive")
        if not self.phi_range[0] < self.phi_range[1]:
            raise ValueError("phi_range bounds must be ordered")
        if self.phi_range[0] <= 0:
            raise ValueError("phi_range must be positive")


@dataclass(frozen=True)
class ModelSpec:
    """Reduced-rank model: restricted (RRP) vs full (FRP), rank, sketch, priors."""

    restricted: bool
    rank_m: int
    sketch: SketchConfig | None = None
    priors: PriorSpec = field(default_factory=PriorSpec)
    nugget: bool = False
    nu: float = 2.5

    def __post_init__(self):
        if self.rank_m < 1:
            raise ValueError("rank_m must be >= 1")
        if self.nu <= 0:
            raise ValueError("nu must be positive")

    def sketch_config(self) -> SketchConfig:
        cfg = self.sketch if self.sketch is not None else SketchConfig(rank_m=self.rank_m)
        if cfg.rank_m != self.rank_m:
            raise ValueError("sketch rank and model rank disagree")
        return cfg

    def validate_for(self, data: SpatialDataset) -> None:
        if self.restricted and self.rank_m > data.n - data.p:
            raise ValueError(
                f"restricted model needs rank_m <= n - p = {data.n - data.p}, got {self.rank_m}"
            )
        cfg = self.sketch_config()
        if cfg.sketch_k > data.n:
            raise ValueError(f"sketch size {cfg.sketch_k} exceeds n = {data.n}")
        if data.family == "gaussian" and not self.nugget:
            raise ValueError("gaussian models require the nugget term")
        if data.family == "bernoulli-probit" and not self.nugget:
            raise ValueError("probit models require the nugget term")


class OrthoProjector:
    """Orthogonal projection machinery for a fixed full-column-rank design X.

    The reduced QR factorization is computed once and reused by every
    projection / least-squares solve against the same design.
    """

    def __init__(self, X: np.ndarray):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        q, r = qr(X, mode="economic")
        diag = np.abs(np.diag(r))
        if diag.min() <= 1e-10 * max(diag.max(), 1.0):
            raise ValueError("design matrix X is numerically rank deficient")
        self.X = X
        self._q = q
        self._r = r

    def complement(self, M: np.ndarray) -> np.ndarray:
        """P_perp M = M - X (X'X)^{-1} X' M via the cached QR factors."""
        return M - self._q @ (self._q.T @ M)

    def coef(self, M: np.ndarray) -> np.ndarray:
        """(X'X)^{-1} X' M, i.e. least-squares coefficients of M on X."""
        return solve_triangular(self._r, self._q.T @ M)


def ortho_complement_apply(X: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Project the columns of M onto the orthogonal complement of span(X)."""
    return OrthoProjector(X).complement(np.asarray(M, dtype=float))


@dataclass(frozen=True)
class LinearPredictorBasis:
    """Synthetic spatial covariates: B = U D^(1/2), projected off X when restricted."""

    B: np.ndarray
    eig: EigenApprox
    restricted: bool


def make_basis(eig: EigenApprox, X: np.ndarray, restricted: bool) -> LinearPredictorBasis:
    """Build the reduced-rank linear predictor basis.

    The eigencomponents always come from the unprojected correlation matrix;
    the restricted variant applies the orthogonal projection afterwards
    (approximation first, projection second).
    """
    b = eig.basis()
    if restricted:
        b = ortho_complement_apply(X, b)
    return LinearPredictorBasis(B=b, eig=eig, restricted=restricted)


def glmm_loglik_eta(response: np.ndarray, eta: np.ndarray, family: str) -> float:
    """Conditional log-likelihood sum_i log f(z_i | eta_i) for a given linear predictor."""
    z = response
    if family == "poisson":
        if np.any(eta > ETA_OVERFLOW):
            log.warning("poisson linear predictor overflow (max eta=%.1f); rejecting", eta.max())
            return -np.inf
        return float(np.sum(z * eta - np.exp(eta) - gammaln(z + 1.0)))
    if family == "bernoulli-logit":
        # z*eta - log(1 + exp(eta)), stable for both signs of eta
        return float(np.sum(z * eta - np.logaddexp(0.0, eta)))
    raise ValueError(f"glmm_loglik supports poisson and bernoulli-logit, got {family!r}")


def glmm_loglik(response, X, B, beta, delta, family) -> float:
    """Conditional GLMM log-likelihood at eta = X beta + B delta."""
    eta = np.asarray(X) @ np.asarray(beta) + np.asarray(B) @ np.asarray(delta)
    return glmm_loglik_eta(np.asarray(response, dtype=float), eta, family)


class LinearMarginal:
    """Fast Gaussian marginal log-likelihood for covariance sigma2 B B' + tau2 I.

    With B the (possibly projected) n x m basis, the Woodbury identity reduces
    the inverse to an m x m core solve and the matrix determinant lemma gives
    the log-determinant from the same core; nothing n x n is ever factorized.
    Per-basis quantities (B'B, B'Y, B'X) are precomputed once so repeated
    evaluations at new (beta, sigma2, tau2) cost O(m^3).
    """

    def __init__(self, Y: np.ndarray, X: np.ndarray, basis: LinearPredictorBasis):
        self.Y = np.asarray(Y, dtype=float).ravel()
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.basis = basis
        B = basis.B
        self.n = self.Y.shape[0]
        self.m = B.shape[1]
        if basis.restricted:
            self.BtB = B.T @ B
            self._diag_core = False
        else:
            # U has orthonormal columns so B'B = diag(D) exactly
            self.BtB = np.diag(basis.eig.D)
            self._diag_core = True
        self.BtY = B.T @ self.Y
        self.BtX = B.T @ self.X
        self.YtY = float(self.Y @ self.Y)
        self.XtY = self.X.T @ self.Y
        self.XtX = self.X.T @ self.X

    def loglik(self, beta: np.ndarray, sigma2: float, tau2: float) -> float:
        if sigma2 <= 0 or tau2 <= 0:
            raise ValueError("variance components must be positive")
        beta = np.asarray(beta, dtype=float).ravel()
        # residual quantities without forming r explicitly
        rtr = self.YtY - 2.0 * float(self.XtY @ beta) + float(beta @ (self.XtX @ beta))
        btr = self.BtY - self.BtX @ beta
        if self._diag_core:
            core_diag = 1.0 / sigma2 + np.diag(self.BtB) / tau2
            quad_corr = float(np.sum(btr * btr / core_diag))
            logdet_core = float(np.sum(np.log(core_diag)))
        else:
            core = self.BtB / tau2
            core[np.diag_indices_from(core)] += 1.0 / sigma2
            cf = cho_factor(core, lower=True)
            quad_corr = float(btr @ cho_solve(cf, btr))
            logdet_core = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
        quad = rtr / tau2 - quad_corr / tau2**2
        logdet = logdet_core + self.m * np.log(sigma2) + self.n * np.log(tau2)
        return -0.5 * (self.n * np.log(2.0 * np.pi) + logdet + quad)

    def sigma_inv_dot(self, M: np.ndarray, sigma2: float, tau2: float) -> np.ndarray:
        """(sigma2 B B' + tau2 I)^{-1} M through the same Woodbury core."""
        B = self.basis.B
        btm = B.T @ M
        if self._diag_core:
            core_sol = btm / (1.0 / sigma2 + np.diag(self.BtB) / tau2)[:, None]
        else:
            core = self.BtB / tau2
            core[np.diag_indices_from(core)] += 1.0 / sigma2
            core_sol = cho_solve(cho_factor(core, lower=True), btm)
        return M / tau2 - (B @ core_sol) / tau2**2


def linear_marginal_loglik(
    Y,
    X,
    beta,
    sigma2: float,
    tau2: float,
    eig: EigenApprox,
    restricted: bool,
) -> float:
    """Marginal Gaussian log-density of Y ~ N(X beta, sigma2 B B' + tau2 I)."""
    basis = make_basis(eig, X, restricted)
    return LinearMarginal(Y, X, basis).loglik(np.asarray(beta, dtype=float), sigma2, tau2)


def reconstruct_w(basis: LinearPredictorBasis | np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Spatial random effect implied by reduced coefficients: W = B delta.

    ``basis`` must be the unprojected (FRP) basis when the result feeds the
    confounding adjustment.
    """
    B = basis.B if isinstance(basis, LinearPredictorBasis) else np.asarray(basis)
    if isinstance(basis, LinearPredictorBasis) and basis.restricted:
        warnings.warn(
            "reconstruct_w called with a restricted basis; the confounding "
            "adjustment requires the unprojected basis",
            RuntimeWarning,
            stacklevel=2,
        )
    return B @ np.asarray(delta)
