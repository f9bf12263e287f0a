"""VaR, expected shortfall and exponential spectral risk measures.

Two models are covered: the peaks-over-threshold tail (a :class:`GpdFit`)
and a Gaussian baseline parameterised by the return mean and standard
deviation. Everything is in percent of position value, losses positive.

Conventions
-----------
``alpha`` is always a confidence level (e.g. 0.99). The tail probability
is ``1 - alpha``. Inside spectral integrals ``p`` is a cumulative
probability, and the loss quantile at ``p`` uses tail probability ``1 - p``.
The exponential risk-aversion weight is
``phi(p) = R exp(-R (1 - p)) / (1 - exp(-R))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special

from evtrisk.errors import QuantileBelowThresholdError
from evtrisk.gpd import GpdFit
from evtrisk.quadrature import QuadratureSpec, integrate

Measure = Literal["VaR", "ES", "SRM"]
Model = Literal["POT", "Gaussian"]

DEFAULT_ALPHAS = (0.99, 0.995, 0.999)
DEFAULT_RISK_AVERSIONS = (20.0, 100.0, 200.0)
DEFAULT_QUADRATURE = QuadratureSpec("trapezoid", 1_000_000)


@dataclass(frozen=True)
class RiskSpec:
    measure: Measure
    model: Model = "POT"
    alpha: float | None = None
    risk_aversion: float | None = None
    quadrature: QuadratureSpec | None = None

    def __post_init__(self):
        if self.measure not in ("VaR", "ES", "SRM"):
            raise ValueError(f"unknown measure {self.measure!r}")
        if self.model not in ("POT", "Gaussian"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.measure in ("VaR", "ES"):
            if self.alpha is None or not 0.5 < self.alpha < 1:
                raise ValueError(f"{self.measure} needs a confidence level in (0.5, 1), got {self.alpha}")
        else:
            if self.risk_aversion is None or not self.risk_aversion > 0:
                raise ValueError(f"SRM needs a positive risk aversion, got {self.risk_aversion}")
            if self.quadrature is None:
                object.__setattr__(self, "quadrature", DEFAULT_QUADRATURE)

    @property
    def level(self) -> float:
        """The conditioning parameter: alpha for VaR/ES, R for SRM."""
        return self.alpha if self.measure != "SRM" else self.risk_aversion

    def to_dict(self) -> dict:
        d = {"measure": self.measure, "model": self.model}
        if self.measure == "SRM":
            d["risk_aversion"] = self.risk_aversion
            d["quadrature"] = self.quadrature.to_dict()
        else:
            d["alpha"] = self.alpha
        return d


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    spec: RiskSpec
    se: float | None = None
    ci_lb: float | None = None
    ci_ub: float | None = None

    def to_dict(self) -> dict:
        return {"value": self.value, "se": self.se, "ci_lb": self.ci_lb, "ci_ub": self.ci_ub, "spec": self.spec.to_dict()}


# -- POT model -----------------------------------------------------------------


def pot_quantile(fit: GpdFit, p):
    """Loss quantile at cumulative probability ``p`` from the tail formula.

    No threshold check: below the threshold the GPD expression is simply
    extrapolated (used inside spectral integrals, where those levels carry
    negligible weight).
    """
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        log_t = np.log(fit.n / fit.n_u) + np.log1p(-p)
    if abs(fit.xi) < 1e-10:
        # expm1(-xi*t)/xi to second order, avoiding beta/xi overflow
        out = fit.u - fit.beta * log_t * (1.0 - 0.5 * fit.xi * log_t)
    else:
        out = fit.u + (fit.beta / fit.xi) * np.expm1(-fit.xi * log_t)
    return out[()] if out.ndim == 0 else out


def _check_alpha(fit: GpdFit, alpha: float) -> None:
    if not 0 < alpha < 1:
        raise ValueError(f"confidence level must lie in (0, 1), got {alpha}")
    tail = 1.0 - alpha
    if tail > fit.exceedance_rate * (1 + 1e-12):
        raise QuantileBelowThresholdError(
            f"tail probability {tail:g} exceeds the modelled exceedance rate {fit.exceedance_rate:g}; "
            "the quantile lies below the threshold, use empirical quantiles there"
        )


def pot_var(fit: GpdFit, alpha: float) -> float:
    _check_alpha(fit, alpha)
    return float(pot_quantile(fit, alpha))


def pot_es(fit: GpdFit, alpha: float) -> float:
    if fit.xi >= 1:
        raise ValueError(f"expected shortfall is infinite for xi >= 1 (xi={fit.xi})")
    q = pot_var(fit, alpha)
    return es_from_var(fit, q)


def es_from_var(fit: GpdFit, q):
    """Tail mean beyond the loss level ``q`` under the fitted tail."""
    return q / (1.0 - fit.xi) + (fit.beta - fit.xi * fit.u) / (1.0 - fit.xi)


def exp_weight(p, R: float):
    p = np.asarray(p, dtype=float)
    if not R > 0:
        raise ValueError("risk aversion must be positive")
    out = R * np.exp(-R * (1.0 - p)) / -math.expm1(-R)
    return out[()] if out.ndim == 0 else out


def pot_srm(fit: GpdFit, R: float, quad: QuadratureSpec = DEFAULT_QUADRATURE, workers: int | None = None) -> float:
    """Spectral risk measure of the fitted loss distribution by quadrature."""
    if fit.xi >= 1:
        raise ValueError(f"spectral risk measure is infinite for xi >= 1 (xi={fit.xi})")
    return integrate(lambda p: exp_weight(p, R) * pot_quantile(fit, p), quad, workers=workers)


def srm_gamma_approximation(fit: GpdFit, R: float) -> float:
    """Large-R closed form ``u - b/xi + (b/xi) (n/N_u)^-xi Gamma(1-xi) R^xi``.

    Replaces the weight by ``R exp(-R s)`` on ``s = 1 - p in (0, inf)``;
    the neglected terms are ``O(exp(-R N_u/n))``.
    """
    xi, b = fit.xi, fit.beta
    if xi == 0:
        return fit.u + b * (math.log(R * fit.n_u / fit.n) + 0.5772156649015329)
    return fit.u - b / xi + (b / xi) * (fit.n / fit.n_u) ** (-xi) * math.gamma(1 - xi) * R**xi


# -- Gaussian baseline ---------------------------------------------------------


def normal_var(mu: float, sigma: float, alpha: float) -> float:
    _check_normal(sigma, alpha)
    return float(sigma * special.ndtri(alpha) - mu)


def normal_es(mu: float, sigma: float, alpha: float) -> float:
    _check_normal(sigma, alpha)
    z = special.ndtri(alpha)
    pdf = math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)
    return float(sigma * pdf / (1.0 - alpha) - mu)


def normal_srm(mu: float, sigma: float, R: float, quad: QuadratureSpec = DEFAULT_QUADRATURE, workers: int | None = None) -> float:
    """Spectral measure of a normal quantile function ``sigma*z_p + mu``.

    Note the sign of ``mu``: the location is added, unlike
    :func:`normal_var` and :func:`normal_es` which subtract it. This is the
    convention of the reference Gaussian SRM values this package is checked
    against; for the small means of weekly returns the difference is ``2*mu``.
    """
    _check_normal(sigma, 0.75)
    return integrate(lambda p: exp_weight(p, R) * (sigma * special.ndtri(p) + mu), quad, workers=workers)


def _check_normal(sigma: float, alpha: float) -> None:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not 0 < alpha < 1:
        raise ValueError(f"confidence level must lie in (0, 1), got {alpha}")


# -- dispatch -----------------------------------------------------------------


def evaluate(spec: RiskSpec, fit: GpdFit | None = None, mu: float | None = None, sigma: float | None = None, workers: int | None = None) -> RiskEstimate:
    """Point estimate for ``spec`` under a POT fit or Gaussian ``(mu, sigma)``."""
    if spec.model == "POT":
        if fit is None:
            raise ValueError("POT measures need a GpdFit")
        if spec.measure == "VaR":
            v = pot_var(fit, spec.alpha)
        elif spec.measure == "ES":
            v = pot_es(fit, spec.alpha)
        else:
            v = pot_srm(fit, spec.risk_aversion, spec.quadrature, workers=workers)
    else:
        if mu is None or sigma is None:
            raise ValueError("Gaussian measures need mu and sigma")
        if spec.measure == "VaR":
            v = normal_var(mu, sigma, spec.alpha)
        elif spec.measure == "ES":
            v = normal_es(mu, sigma, spec.alpha)
        else:
            v = normal_srm(mu, sigma, spec.risk_aversion, spec.quadrature, workers=workers)
    return RiskEstimate(float(v), spec)
