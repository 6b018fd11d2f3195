"""Spatial correlation structure: Matern kernels for point-referenced data and
intrinsic-CAR precision / generalized-inverse covariance for areal data.

Locations are plain ``(n, d)`` float arrays with ``d`` in {2, 3}; all
construction helpers validate finiteness up front so downstream linear algebra
can assume clean inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist, pdist, squareform
from scipy.special import gammaln, kv

__all__ = [
    "MaternParams",
    "CorrelationMatrix",
    "ArealGraph",
    "IcarPrecision",
    "as_locations",
    "matern_corr",
    "build_corr_matrix",
    "matern_from_distances",
    "icar_precision",
    "generalized_inverse",
]


@dataclass(frozen=True)
class MaternParams:
    """Matern kernel parameters; smoothness ``nu`` is held fixed during inference."""

    sigma2: float
    phi: float
    nu: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.phi > 0 and self.nu > 0):
            raise ValueError(
                f"Matern parameters must be strictly positive, got "
                f"sigma2={self.sigma2}, phi={self.phi}, nu={self.nu}"
            )


@dataclass(frozen=True)
class CorrelationMatrix:
    """Dense correlation matrix together with the inputs that generated it."""

    entries: np.ndarray
    locations: np.ndarray
    phi: float
    nu: float

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class ArealGraph:
    """Undirected neighborhood graph given by a binary adjacency matrix."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        object.__setattr__(self, "adjacency", a.astype(np.int64))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_components(self) -> int:
        ncomp, _ = connected_components(self.adjacency, directed=False)
        return int(ncomp)


@dataclass(frozen=True)
class IcarPrecision:
    """ICAR precision matrix diag(A1) - A and its rank."""

    Q: np.ndarray
    rank: int


def as_locations(locations) -> np.ndarray:
    """Coerce to an (n, d) float array of finite coordinates, d in {2, 3}."""
    locs = np.atleast_2d(np.asarray(locations, dtype=float))
    if locs.ndim != 2 or locs.shape[1] not in (2, 3):
        raise ValueError(f"locations must be (n, d) with d in {{2, 3}}, got shape {locs.shape}")
    if not np.all(np.isfinite(locs)):
        raise ValueError("locations contain non-finite coordinates")
    return locs


def matern_corr(h, phi: float, nu: float):
    """Matern correlation rho(h; phi, nu) using the sqrt(2 nu) h / phi scaling.

    Closed forms are used for nu in {0.5, 1.5, 2.5}; any other smoothness is
    evaluated through the modified Bessel function of the second kind.
    Accepts scalars or arrays of nonnegative distances and returns values in
    (0, 1], with rho(0) = 1 exactly.
    """
    if phi <= 0:
        raise ValueError(f"range parameter phi must be positive, got {phi}")
    if nu <= 0:
        raise ValueError(f"smoothness parameter nu must be positive, got {nu}")
    h_arr = np.asarray(h, dtype=float)
    if np.any(h_arr < 0):
        raise ValueError("distances must be nonnegative")

    if nu == 0.5:
        rho = np.exp(-h_arr / phi)
    elif nu == 1.5:
        a = np.sqrt(3.0) * h_arr / phi
        rho = (1.0 + a) * np.exp(-a)
    elif nu == 2.5:
        a = np.sqrt(5.0) * h_arr / phi
        rho = (1.0 + a + a * a / 3.0) * np.exp(-a)
    else:
        x = np.sqrt(2.0 * nu) * h_arr / phi
        # x^nu * K_nu(x) -> Gamma(nu) 2^(nu-1) as x -> 0; patch the limit in
        # explicitly since the two factors overflow/underflow separately.
        small = x < 1e-10
        xs = np.where(small, 1.0, x)
        with np.errstate(over="ignore", invalid="ignore"):
            log_rho = (
                (1.0 - nu) * np.log(2.0)
                - gammaln(nu)
                + nu * np.log(xs)
                + np.log(kv(nu, xs))
            )
            rho = np.where(small, 1.0, np.exp(log_rho))
        rho = np.where(np.isnan(rho), 0.0, rho)  # kv underflow at very large x
    return rho if np.ndim(h) else float(rho)


def matern_from_distances(dist: np.ndarray, phi: float, nu: float) -> np.ndarray:
    """Correlation matrix from a precomputed distance matrix (hot path)."""
    return matern_corr(dist, phi, nu)


def build_corr_matrix(locations, params: MaternParams) -> CorrelationMatrix:
    """Pairwise Matern correlation matrix R with R_ij = rho(||s_i - s_j||)."""
    locs = as_locations(locations)
    n = locs.shape[0]
    if n < 2:
        raise ValueError("need at least 2 locations")
    d = pdist(locs)
    if np.any(d == 0):
        warnings.warn(
            "duplicate locations detected; correlation matrix may be near singular",
            RuntimeWarning,
            stacklevel=2,
        )
    entries = squareform(matern_corr(d, params.phi, params.nu))
    np.fill_diagonal(entries, 1.0)
    return CorrelationMatrix(entries=entries, locations=locs, phi=params.phi, nu=params.nu)


def cross_corr_matrix(new_locations, locations, phi: float, nu: float) -> np.ndarray:
    """Matern correlations between new sites (rows) and training sites (cols)."""
    a = as_locations(new_locations)
    b = as_locations(locations)
    return matern_corr(cdist(a, b), phi, nu)


def icar_precision(graph: ArealGraph) -> IcarPrecision:
    """ICAR precision Q = diag(A1) - A; row sums are exactly zero."""
    a = graph.adjacency
    q = np.diag(a.sum(axis=1)) - a
    rank = graph.n - graph.n_components
    return IcarPrecision(Q=q, rank=rank)


def generalized_inverse(precision, tol: float = 1e-10) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix.

    Eigenvalues below ``tol * lambda_max`` are treated as exact zeros, which
    separates the ICAR null space from genuinely small spatial eigenvalues.
    """
    q = precision.Q if isinstance(precision, IcarPrecision) else np.asarray(precision, dtype=float)
    if q.shape[0] != q.shape[1]:
        raise ValueError("precision matrix must be square")
    if not np.allclose(q, q.T, atol=1e-12 * max(1.0, np.abs(q).max())):
        raise ValueError("precision matrix must be symmetric")
    w, v = np.linalg.eigh(q.astype(float))
    cutoff = tol * max(w.max(), 0.0)
    inv_w = np.where(w > cutoff, 1.0 / np.where(w > cutoff, w, 1.0), 0.0)
    pinv = (v * inv_w) @ v.T
    return 0.5 * (pinv + pinv.T)
