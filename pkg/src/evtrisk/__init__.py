"""Extreme tail risk for return series via peaks-over-threshold GPD fits.

VaR, expected shortfall and exponential spectral risk measures, a Gaussian
baseline, semi-parametric bootstrap precision metrics, quadrature rules for
spectral integrals and threshold diagnostics.
"""

__version__ = "0.1.0"

from evtrisk.bootstrap import BootstrapConfig, BootstrapResult, bootstrap_many, bootstrap_risk, resample_losses
from evtrisk.gpd import (
    GpdFit,
    GpdParams,
    fit_gpd,
    gpd_cdf,
    gpd_loglik,
    gpd_quantile,
    gpd_sample,
    gpd_score,
    tail_prob,
    threshold_from_count,
)
from evtrisk.quadrature import QuadratureSpec, integrate, niederreiter_sequence, weyl_sequence
from evtrisk.risk import (
    RiskEstimate,
    RiskSpec,
    exp_weight,
    normal_es,
    normal_srm,
    normal_var,
    pot_es,
    pot_srm,
    pot_var,
)
from evtrisk.timeseries import (
    LossSeries,
    PriceSeries,
    ReturnSeries,
    SummaryStats,
    generate_synthetic_returns,
    load_price_series,
    log_returns,
    summary_stats,
    to_loss_series,
)
