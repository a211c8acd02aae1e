"""PI-networks: three-quantile regression networks with finite-sample
calibrated prediction intervals."""

from .calibrate import (
    DEFAULT_GRID,
    conformity_score,
    conservative_pav,
    empirical_coverage,
    expand_interval,
    fixed_width_conformal,
    pav_sample_bound,
    pav_select,
    split_conformal,
)
from .data import (
    Dataset,
    OraclePredictor,
    SyntheticSpec,
    gen_synthetic,
    load_csv,
    oracle_quantiles,
    split,
    standardize,
)
from .intervals import PiInterval, PiTriple
from .losses import empirical_risk, gaussian_nll, pi_loss, pinball
from .metrics import conditional_coverage, coverage_by_length, interval_metrics
from .net import GaussianNetwork, PiNetwork, TrainConfig, TrivialNetwork, backward, fit, monotone_head

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_GRID",
    "Dataset",
    "GaussianNetwork",
    "OraclePredictor",
    "PiInterval",
    "PiNetwork",
    "PiTriple",
    "SyntheticSpec",
    "TrainConfig",
    "TrivialNetwork",
    "backward",
    "conditional_coverage",
    "conformity_score",
    "conservative_pav",
    "coverage_by_length",
    "empirical_coverage",
    "empirical_risk",
    "expand_interval",
    "fit",
    "fixed_width_conformal",
    "gaussian_nll",
    "gen_synthetic",
    "interval_metrics",
    "load_csv",
    "monotone_head",
    "oracle_quantiles",
    "pav_sample_bound",
    "pav_select",
    "pi_loss",
    "pinball",
    "split",
    "split_conformal",
    "standardize",
]
