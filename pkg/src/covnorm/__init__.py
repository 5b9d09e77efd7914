"""Compression of linear adaptation layers by covariance normalization."""
from .baselines import BaselineSpec, FitConfig, bn_recolor, fit_factors, fit_factors_moments, svd_truncate
from .errors import (
    CovNormError,
    DegeneracyError,
    DimensionError,
    FormatError,
    InputError,
    InsufficientDataError,
    OptimizationError,
    RankDeficiencyError,
)
from .evaluation import CovNormConfig, DataBundle, EvalReport, analytic_mse, compare, data_mse, energy_curves
from .recolor import CompressedLayer, RecolorTransform, absorb, covnorm_from_moments, covnorm_pipeline, eta_ratio
from .stats import Pca, RunningMoments, TruncatedPca, merge, pca, truncate, truncate_to

__version__ = "0.1.0"
