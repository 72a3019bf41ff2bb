"""Reduced-structure VARX estimation via nilpotent-Jordan state-space realizations.

The lag polynomial of a VARX model factors through a minimal state-space
triple whose state matrix is a nilpotent Jordan matrix; fixing the Jordan
structure turns estimation into minimizing a determinant-ratio likelihood
over one block coefficient matrix.  This package enumerates the admissible
structures, evaluates the concentrated objective with analytic gradient and
Hessian, normalizes coefficients by a generalized block LQ factorization,
fits and selects structures, simulates, and forecasts.
"""

from .blockops import (
    BlockMatrixG,
    CentralizerElement,
    OrthoParam,
    RankReport,
    check_minimality_G,
    check_minimality_H,
    kappa,
    kappa_adjoint,
    lq_multi_lag,
    parameterize,
    random_centralizer,
    realize_centralizer,
    reconstruct,
)
from .errors import (
    DataError,
    LikelihoodDomainError,
    RankDeficiencyError,
    SingularMomentError,
    StructureError,
    VarstateError,
)
from .estimation import (
    FitOptions,
    FitResult,
    ScanResult,
    SelectionReport,
    SelectionRow,
    fit,
    fit_from_moments,
    full_ols_fit,
    predict,
    scan_G,
    scan_grid,
    select_structure,
)
from .likelihood import (
    ConcentratedModel,
    LagDataset,
    MomentMatrices,
    VrwCoefficients,
    VrwModel,
    build_lag_data,
    concentrated_model,
    gradient,
    hessian_bilinear,
    hessian_matrix,
    moment_matrices,
    neg_log_lik,
    optimal_H,
    phi_from_hfg,
    residual_covariance,
    vrw_neg_log_lik,
    vrw_optimal_A,
    vrw_upsilon,
)
from .simulation import (
    GeneratedModel,
    companion_matrix,
    is_stable,
    random_stable_model,
    simulate,
)
from .structure import (
    JordanSpec,
    StructureParams,
    centralizer_dim,
    enumerate_structures,
    jordan_matrix,
    jordan_spec,
    mcmillan_degree,
    param_reduction,
    structure_from_dvec,
    structure_from_json,
    structure_from_pairs,
    structure_to_json,
)

__version__ = "0.1.0"
