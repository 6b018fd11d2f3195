"""Reduced-rank Bayesian inference for spatial generalized linear mixed models.

The package approximates the leading eigencomponents of spatial correlation
matrices by a randomized Nystrom projection, reparameterizes the spatial
random effects onto that basis (full model, FRP, or restricted to the
orthogonal complement of the covariates, RRP), fits the models by
Metropolis-within-Gibbs, corrects restricted fits for spatial confounding a
posteriori, and ships a simulation harness plus CLI for benchmark and
replicate studies.
"""

__version__ = "0.1.0"

from .covariance import (
    ArealGraph,
    CorrelationMatrix,
    IcarPrecision,
    MaternParams,
    build_corr_matrix,
    generalized_inverse,
    icar_precision,
    matern_corr,
)
from .models import (
    LinearPredictorBasis,
    ModelSpec,
    PriorSpec,
    SpatialDataset,
    glmm_loglik,
    linear_marginal_loglik,
    make_basis,
    ortho_complement_apply,
    reconstruct_w,
)
from .randproj import (
    EigenApprox,
    RankDeficiencyError,
    SketchConfig,
    approx_eigs,
    deterministic_subsample_eigs,
    eigenvalue_error,
    form_projection,
    gaussian_sketch,
    nystrom_eig,
    subspace_distance,
)

__all__ = [
    "__version__",
    "ArealGraph",
    "CorrelationMatrix",
    "IcarPrecision",
    "MaternParams",
    "build_corr_matrix",
    "generalized_inverse",
    "icar_precision",
    "matern_corr",
    "LinearPredictorBasis",
    "ModelSpec",
    "PriorSpec",
    "SpatialDataset",
    "glmm_loglik",
    "linear_marginal_loglik",
    "make_basis",
    "ortho_complement_apply",
    "reconstruct_w",
    "EigenApprox",
    "RankDeficiencyError",
    "SketchConfig",
    "approx_eigs",
    "deterministic_subsample_eigs",
    "eigenvalue_error",
    "form_projection",
    "gaussian_sketch",
    "nystrom_eig",
    "subspace_distance",
]
