from ragprune.numerics.gmm import (
    GmmConfig,
    GmmFitError,
    GmmModel,
    gmm_fit,
    gmm_log_likelihood,
    gmm_select_k,
    logsumexp,
)
from ragprune.numerics.outliers import (
    OutlierDecision,
    detect_outliers,
    emit_scatter_data,
    percentile_threshold,
)
from ragprune.numerics.pca import PcaModel, pca_fit_transform

__all__ = [
    "GmmConfig",
    "GmmFitError",
    "GmmModel",
    "OutlierDecision",
    "PcaModel",
    "detect_outliers",
    "emit_scatter_data",
    "gmm_fit",
    "gmm_log_likelihood",
    "gmm_select_k",
    "logsumexp",
    "pca_fit_transform",
    "percentile_threshold",
]
