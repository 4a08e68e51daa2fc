"""Welfare comparisons of housing-wealth distributions across policy rounds."""

from .dominance import GridConfig, dominance_functional, grid_for, sd_test, sup_statistic
from .hedonic import HedonicConfig, HedonicData, fit_partial_linear, level_enhanced, residual_bootstrap_sd
from .model import (
    ConfigError,
    DataError,
    NumericError,
    RoundPartition,
    TransactionRecord,
    WeightedSample,
    validate_sample,
)
from .reweight import attach_weights, compute_weights
from .welfare import ratio_test, utility, wealth_ratio, welfare_estimate

__version__ = "0.1.0"
