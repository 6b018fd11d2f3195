"""Randomized Nystrom approximation of the leading eigencomponents of a PSD
matrix, plus the subspace / eigenvalue error metrics used to benchmark it.

The sketch is ``phi = K^alpha @ omega`` with i.i.d. Gaussian ``omega`` (entry
standard deviation ``1/sqrt(k)``); the core factorization is

    K11 = phi' K phi  ->  eigendecompose K11
    C   = (K phi) V_k diag(lambda_k)^(-1/2)
    C   = U diag(s) V'   (thin SVD)

and the first ``m`` columns of U with the first ``m`` values of ``s**2`` are
returned as approximate eigenvectors/eigenvalues of K. The entry scale of
``omega`` cancels in the extension, so only reproducibility depends on it.

RNG discipline: every sketch is drawn from ``numpy.random.default_rng(seed)``;
callers that re-sketch inside a Markov chain draw one fresh substream seed per
invocation from a dedicated seed generator so chains replay bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import eigh, svd

__all__ = [
    "SketchConfig",
    "EigenApprox",
    "RankDeficiencyError",
    "gaussian_sketch",
    "form_projection",
    "nystrom_eig",
    "approx_eigs",
    "deterministic_subsample_eigs",
    "subspace_distance",
    "eigenvalue_error",
]

class RankDeficiencyError(RuntimeError):
    """Sketched core matrix has too few usable eigenvalues for the target rank."""

    def __init__(self, achieved: int, requested: int):
        self.achieved = achieved
        self.requested = requested
        super().__init__(
            f"sketch core supports numerical rank {achieved}, "
            f"but rank {requested} was requested"
        )


@dataclass(frozen=True)
class SketchConfig:
    """Sketch geometry: target rank m, oversampling l (default l = m), power alpha."""

    rank_m: int
    oversample_l: int | None = None
    power_alpha: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.rank_m < 1:
            raise ValueError("rank_m must be >= 1")
        if self.oversample_l is not None and self.oversample_l < 0:
            raise ValueError("oversample_l must be >= 0")
        if self.power_alpha not in (0, 1, 2):
            raise ValueError("power_alpha must be 0, 1 or 2")

    @property
    def sketch_k(self) -> int:
        l = self.rank_m if self.oversample_l is None else self.oversample_l
        return self.rank_m + l

    def with_seed(self, seed: int) -> "SketchConfig":
        return replace(self, seed=int(seed))


@dataclass(frozen=True)
class EigenApprox:
    """Approximate leading eigenvectors (orthonormal columns) and eigenvalues."""

    U: np.ndarray
    D: np.ndarray
    config: SketchConfig
    source_phi: float | None = None

    def __post_init__(self):
        if self.U.shape[1] != self.D.shape[0]:
            raise ValueError("U and D disagree on the number of components")

    @property
    def rank(self) -> int:
        return self.D.shape[0]

    def basis(self) -> np.ndarray:
        """Synthetic spatial variables U diag(D)^(1/2)."""
        return self.U * np.sqrt(self.D)


def gaussian_sketch(n: int, k: int, seed) -> np.ndarray:
    """(n, k) matrix of i.i.d. N(0, sd=1/sqrt(k)) entries, reproducible by seed."""
    if not 1 <= k <= n:
        raise ValueError(f"sketch size k={k} must satisfy 1 <= k <= n={n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.normal(0.0, 1.0 / np.sqrt(k), size=(n, k))


def form_projection(K: np.ndarray, omega: np.ndarray, alpha: int) -> np.ndarray:
    """phi = K^alpha @ omega, by repeated multiplication (K^2 is never formed)."""
    if alpha not in (0, 1, 2):
        raise ValueError("alpha must be 0, 1 or 2")
    if K.shape[0] != K.shape[1] or K.shape[1] != omega.shape[0]:
        raise ValueError(
            f"dimension mismatch: K is {K.shape}, omega is {omega.shape}"
        )
    phi = omega
    for _ in range(alpha):
        phi = K @ phi
    return phi


def _nystrom_core(K: np.ndarray, phi_mat: np.ndarray, rank_m: int):
    """Shared Nystrom extension: returns (U_m, D_m) for any projection matrix.

    Core eigenvalues below the numerical certainty level k*eps*lambda_max
    would only amplify rounding noise through the 1/sqrt scaling. When enough
    certain eigenvalues remain they are simply dropped; otherwise (strongly
    decaying spectra at large ranks) the uncertain ones are floored at that
    level, which keeps the extension columns bounded by the top of the true
    spectrum so the trailing components degrade gracefully instead of
    swamping the leading ones.
    """
    k = phi_mat.shape[1]
    if rank_m > k:
        raise ValueError(f"rank m={rank_m} exceeds sketch size k={k}")
    kphi = K @ phi_mat
    k11 = phi_mat.T @ kphi
    k11 = 0.5 * (k11 + k11.T)
    lam, vec = eigh(k11)
    lam_max = lam[-1]
    if not np.isfinite(lam_max) or lam_max <= 0.0:
        raise RankDeficiencyError(0, rank_m)
    floor = k * np.finfo(float).eps * lam_max
    certain = lam >= floor
    if int(certain.sum()) >= rank_m:
        lam, vec = lam[certain], vec[:, certain]
    else:
        lam = np.maximum(lam, floor)
    c = kphi @ (vec / np.sqrt(lam))
    u, s, _ = svd(c, full_matrices=False)
    u = u[:, :rank_m]
    # deterministic sign convention: SVD column signs are arbitrary, which
    # would make bases at nearby kernel parameters jump; fixing signs against
    # a reproducible reference keeps them continuous across rebuilds
    signs = np.sign(_sign_reference(u.shape[0]) @ u)
    signs[signs == 0] = 1.0
    return u * signs, s[:rank_m] ** 2


def _sign_reference(n: int) -> np.ndarray:
    ref = _SIGN_REF_CACHE.get(n)
    if ref is None:
        ref = np.random.default_rng(0x5EED).standard_normal(n)
        _SIGN_REF_CACHE[n] = ref
    return ref


_SIGN_REF_CACHE: dict[int, np.ndarray] = {}


def nystrom_eig(
    K: np.ndarray,
    phi_mat: np.ndarray,
    rank_m: int,
    config: SketchConfig | None = None,
    source_phi: float | None = None,
) -> EigenApprox:
    """Nystrom eigendecomposition of K through the projection ``phi_mat``."""
    u, d = _nystrom_core(np.asarray(K, dtype=float), np.asarray(phi_mat, dtype=float), rank_m)
    if config is None:
        config = SketchConfig(rank_m=rank_m, oversample_l=phi_mat.shape[1] - rank_m)
    return EigenApprox(U=u, D=d, config=config, source_phi=source_phi)


def approx_eigs(K: np.ndarray, config: SketchConfig, source_phi: float | None = None) -> EigenApprox:
    """Gaussian sketch -> power projection -> Nystrom, deterministic given seed."""
    K = np.asarray(K, dtype=float)
    omega = gaussian_sketch(K.shape[0], config.sketch_k, config.seed)
    phi_mat = form_projection(K, omega, config.power_alpha)
    u, d = _nystrom_core(K, phi_mat, config.rank_m)
    return EigenApprox(U=u, D=d, config=config, source_phi=source_phi)


def deterministic_subsample_eigs(K: np.ndarray, k: int, m: int, seed) -> EigenApprox:
    """Nystrom with a permuted identity column selector (the non-random baseline).

    The projection picks k distinct columns of K uniformly at random once; the
    approximation is then deterministic in that choice.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if not m <= k <= n:
        raise ValueError(f"need m <= k <= n, got m={m}, k={k}, n={n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    idx = rng.permutation(n)[:k]
    phi_mat = np.zeros((n, k))
    phi_mat[idx, np.arange(k)] = 1.0
    u, d = _nystrom_core(K, phi_mat, m)
    cfg = SketchConfig(rank_m=m, oversample_l=k - m, power_alpha=0)
    return EigenApprox(U=u, D=d, config=cfg)


def subspace_distance(U: np.ndarray, V: np.ndarray) -> float:
    """Frobenius distance between the orthogonal projectors of two bases.

    Uses ||P_U - P_V||_F^2 = 2 m - 2 ||U'V||_F^2, so the n x n projectors are
    never formed. Invariant to column sign flips and rotations within the span.
    """
    if U.shape != V.shape:
        raise ValueError(f"shape mismatch: {U.shape} vs {V.shape}")
    m = U.shape[1]
    cross = U.T @ V
    d2 = 2.0 * m - 2.0 * float(np.sum(cross * cross))
    return float(np.sqrt(max(d2, 0.0)))


def eigenvalue_error(lambda_hat, lambda_true) -> float:
    """Euclidean norm of the difference between two eigenvalue vectors."""
    a = np.asarray(lambda_hat, dtype=float)
    b = np.asarray(lambda_true, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))
