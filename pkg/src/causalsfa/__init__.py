"""Causal treatment-effect estimators for stochastic frontier models.

Every estimator decomposes a total treatment effect on output into a direct
(frontier) channel and an indirect (inefficiency) channel, and each design
gets a likelihood-based fit plus at least one independent cross-check route.
"""

from .data import Dataset
from .did import (
    DidSfaFit,
    DidSfaParams,
    LrTestResult,
    TwoStepBenchmark,
    did_sfa_loglik,
    fit_did_sfa,
    identify_did_moments,
    lr_test_indirect,
    naive_did,
    naive_did_plim,
    two_step_benchmark,
)
from .distributions import (
    ComposedErrorParams,
    FoldedNormalCondParams,
    composed_error_logpdf,
    folded_normal_cond_pdf,
    halfnormal_moments,
    std_normal_cdf,
    std_normal_pdf,
)
from .endogeneity import (
    ApsFit,
    ApsParams,
    C2slsFit,
    EndoSpec,
    GmmFit,
    aps_loglik,
    c2sls_fit,
    fit_aps_mle,
    gmm_fit,
    gmm_moments,
)
from .errors import (
    CausalSfaError,
    CollinearityError,
    ConvergenceError,
    DomainError,
    EvaluationError,
    IdentificationError,
    SchemaError,
)
from .optimize import OptimResult, maximize, numeric_gradient, numeric_hessian_se
from .random_assignment import (
    TwoGroupFit,
    TwoGroupParams,
    fit_two_group,
    naive_mean_difference,
    two_group_loglik,
)
from .rdd import (
    FrdFit,
    RddSpec,
    ScalingSpec,
    SrdLocalFit,
    SrdSfaFit,
    bandwidth_select,
    fit_srd_sfa,
    frd_wald,
    srd_local_linear,
    srd_sfa_loglik,
)
from .results import Decomposition
from .sfa import (
    FrontierSpec,
    SfaFit,
    efficiency_scores,
    fit_sfa_cols,
    fit_sfa_mle,
    sfa_loglik,
)
from .simulate import SimDesign, generate, replicate_study, truth
from .staggered import (
    AuditTable,
    CattEstimate,
    CohortPanel,
    catt_iw,
    confounding_audit,
)

__version__ = "0.1.0"

__all__ = [
    "ApsFit",
    "ApsParams",
    "AuditTable",
    "C2slsFit",
    "CattEstimate",
    "CausalSfaError",
    "CohortPanel",
    "CollinearityError",
    "ComposedErrorParams",
    "ConvergenceError",
    "Dataset",
    "Decomposition",
    "DidSfaFit",
    "DidSfaParams",
    "DomainError",
    "EndoSpec",
    "EvaluationError",
    "FoldedNormalCondParams",
    "FrdFit",
    "FrontierSpec",
    "GmmFit",
    "IdentificationError",
    "LrTestResult",
    "OptimResult",
    "RddSpec",
    "ScalingSpec",
    "SchemaError",
    "SfaFit",
    "SimDesign",
    "SrdLocalFit",
    "SrdSfaFit",
    "TwoGroupFit",
    "TwoGroupParams",
    "TwoStepBenchmark",
    "aps_loglik",
    "bandwidth_select",
    "c2sls_fit",
    "catt_iw",
    "composed_error_logpdf",
    "confounding_audit",
    "did_sfa_loglik",
    "efficiency_scores",
    "fit_aps_mle",
    "fit_did_sfa",
    "fit_sfa_cols",
    "fit_sfa_mle",
    "fit_srd_sfa",
    "fit_two_group",
    "folded_normal_cond_pdf",
    "frd_wald",
    "generate",
    "gmm_fit",
    "gmm_moments",
    "halfnormal_moments",
    "identify_did_moments",
    "lr_test_indirect",
    "maximize",
    "naive_did",
    "naive_did_plim",
    "naive_mean_difference",
    "numeric_gradient",
    "numeric_hessian_se",
    "replicate_study",
    "sfa_loglik",
    "srd_local_linear",
    "srd_sfa_loglik",
    "std_normal_cdf",
    "std_normal_pdf",
    "truth",
    "two_group_loglik",
    "two_step_benchmark",
    "__version__",
]
